use augsync::cases;
use augsync::io::parse_matrix_str;
use augsync::roa::{
    certify_type1, fit_p_from_jacobians, integrator_relaxation, lmi_objective, FitMethod, FitOptions, KrasovskiiV,
    RoaVerdict, SamplerConfig,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fitted() -> KrasovskiiV {
    let sys = cases::nine_bus();
    KrasovskiiV::new(parse_matrix_str(cases::P_FITTED).unwrap(), integrator_relaxation(&sys)).unwrap()
}

#[test]
fn bundled_fitted_p_is_certified_at_its_level() {
    let sys = cases::nine_bus();
    let eq = cases::nine_bus_equilibrium(&sys, 0.0);
    let cfg = SamplerConfig { n_samples: 1000, ..SamplerConfig::default() };
    let cert = certify_type1(&sys, &fitted(), 1e-6, &eq, &cfg).unwrap();
    assert_eq!(cert.verdict, RoaVerdict::CertifiedSampled, "{:?}", cert.counterexample);
    assert_eq!(cert.n_samples, 1001);
    assert!(cert.max_decrease_stat < 0.0);
    assert!(cert.min_log_det_dgdz.is_finite());
    let again = certify_type1(&sys, &fitted(), 1e-6, &eq, &cfg).unwrap();
    assert_eq!(cert, again);
}

#[test]
fn fitted_p_fails_on_a_much_larger_set() {
    let sys = cases::nine_bus();
    let eq = cases::nine_bus_equilibrium(&sys, 0.0);
    let cfg = SamplerConfig { n_samples: 400, ..SamplerConfig::default() };
    let cert = certify_type1(&sys, &fitted(), 1e-3, &eq, &cfg).unwrap();
    assert_eq!(cert.verdict, RoaVerdict::Refuted);
    assert!(cert.counterexample.is_some());
}

fn stable_family(n: usize, count: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = DMatrix::from_fn(n, n, |i, j| if i == j { -1.0 } else { rng.gen_range(-0.3..0.3) });
    (0..count).map(|_| &base + DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.05..0.05))).collect()
}

#[test]
fn both_fit_methods_find_a_metric_for_a_stable_family() {
    let js = stable_family(4, 60, 2);
    let a = DMatrix::identity(4, 4);
    for method in [FitMethod::Smoothed, FitMethod::Subgradient] {
        let r = fit_p_from_jacobians(&js, &a, FitOptions { method, ..FitOptions::default() }).unwrap();
        assert!(r.objective < -1e-3, "{method:?}: {}", r.objective);
        assert!((r.p.trace() - 4.0).abs() <= 1e-9);
        // independent recomputation of the objective
        let worst = js
            .iter()
            .map(|j| {
                let m = &r.p * j + j.transpose() * &r.p;
                m.symmetric_eigen().eigenvalues.max()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((worst - r.objective).abs() <= 1e-9 * worst.abs().max(1.0));
    }
}

#[test]
fn unstable_family_is_infeasible() {
    let js: Vec<_> = stable_family(3, 10, 5).into_iter().map(|j| -j).collect();
    let a = DMatrix::identity(3, 3);
    let opts = FitOptions { max_iter: 500, ..FitOptions::default() };
    assert!(matches!(fit_p_from_jacobians(&js, &a, opts), Err(augsync::Error::Infeasible { .. })));
}

proptest! {
    #[test]
    fn objective_is_positively_homogeneous(c in 0.01f64..100.0, seed in 0u64..1000) {
        let js = stable_family(3, 5, seed);
        let a = DMatrix::identity(3, 3);
        let p = DMatrix::from_diagonal_element(3, 3, 1.0);
        let base = lmi_objective(&p, &a, &js);
        let scaled = lmi_objective(&(p * c), &a, &js);
        prop_assert!((scaled - c * base).abs() <= 1e-10 * (c * base).abs().max(1.0));
    }
}
