mod common;

use augsync::cases;
use augsync::detectability::{degenerate_eq, degeneration_diagnostics_sg, lemma1_residual, sg_dg_dx2, verify_lemma1};
use augsync::io::{parse_case_str, CaseFile};
use augsync::model::{build_admittance, Branch, Device, Terminal};
use augsync::simulate::{integrate, project_algebraic, DomainBox, IntegratorConfig, ProjectionOptions};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn branch_strategy(n_bus: usize) -> impl Strategy<Value = Branch> {
    (1..=n_bus, 1..=n_bus, 0.0f64..0.1, 0.01f64..0.5, 0.0f64..0.3)
        .prop_filter("no self loops", |(a, b, ..)| a != b)
        .prop_map(|(a, b, r, x, bs)| Branch::from_impedance(a, b, r, x, bs))
}

proptest! {
    #[test]
    fn admittance_is_symmetric(branches in prop::collection::vec(branch_strategy(6), 1..12)) {
        let y = build_admittance(&branches, 6).unwrap();
        prop_assert!(y.is_symmetric(0.0));
    }

    #[test]
    fn row_sums_equal_shunts(branches in prop::collection::vec(branch_strategy(5), 1..10)) {
        // with every line charging removed, Y has zero row sums
        let series: Vec<Branch> = branches.iter().map(|b| Branch { b_shunt: 0.0, ..*b }).collect();
        let y = build_admittance(&series, 5).unwrap();
        for i in 0..5 {
            prop_assert!(y.g.row(i).sum().abs() < 1e-9);
            prop_assert!(y.b.row(i).sum().abs() < 1e-9);
        }
    }

    #[test]
    fn projection_never_moves_x(dx in prop::collection::vec(-0.1f64..0.1, 8)) {
        let sys = cases::nine_bus();
        let base = common::base_state(&sys);
        let x = &base.x + DVector::from_column_slice(&dx);
        if let Ok((z, _)) = project_algebraic(&sys, &sys.x2(&x), &base.z, ProjectionOptions::default()) {
            let s = augsync::model::SystemState::new(x.clone(), z);
            prop_assert_eq!(&s.x, &x);
            prop_assert!(sys.eval_g(&s).amax() <= 1e-10);
        }
    }

    #[test]
    fn projection_identity_holds_pointwise(dx in prop::collection::vec(-0.2f64..0.2, 8)) {
        let sys = cases::nine_bus();
        let base = common::base_state(&sys);
        if let Some(s) = common::perturbed(&sys, &base, &dx) {
            if let Some(r) = lemma1_residual(&sys, &s, 1e-8).unwrap() {
                prop_assert!(r <= 1e-10, "residual {}", r);
            }
        }
    }
}

fn edit_reactance(case: &CaseFile, k: usize, x: f64) -> CaseFile {
    let mut c = case.clone();
    c.branches[k].x = x;
    c
}

#[test]
fn editing_one_branch_touches_only_its_rows() {
    let case = parse_case_str(cases::CASE9).unwrap();
    assert_eq!((case.buses.len(), case.branches.len()), (9, 9));
    let y0 = case.network().unwrap().admittance;
    for k in 0..case.branches.len() {
        let edited = edit_reactance(&case, k, case.branches[k].x * 1.3);
        let y1 = edited.network().unwrap().admittance;
        let (f, t) = (case.branches[k].from - 1, case.branches[k].to - 1);
        for i in 0..9 {
            for j in 0..9 {
                let touched = (i == f || i == t) && (j == f || j == t);
                let changed = y0.g[(i, j)] != y1.g[(i, j)] || y0.b[(i, j)] != y1.b[(i, j)];
                assert!(touched || !changed, "branch {k}: entry ({i}, {j}) changed");
            }
        }
        assert!(y0.b[(f, t)] != y1.b[(f, t)]);
    }
}

#[test]
fn cross_device_blocks_are_zero() {
    for (name, sys) in common::systems() {
        for s in common::random_states(&sys, 20, 0.1, 3) {
            sys.check_modularity(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}

#[test]
fn projection_identity_at_random_states() {
    for (name, sys) in common::systems() {
        let mut worst = 0.0f64;
        for s in common::random_states(&sys, 1000, 0.15, 5) {
            if let Some(r) = lemma1_residual(&sys, &s, 1e-8).unwrap() {
                worst = worst.max(r);
            }
        }
        assert!(worst <= 1e-10, "{name}: {worst:.3e}");
    }
}

#[test]
fn g_is_a_first_integral_and_projection_identity_holds_along_runs() {
    let cfg = IntegratorConfig { t_end: 20.0, output_interval: 0.05, ..IntegratorConfig::default() };
    for (name, sys) in common::systems() {
        let start = common::random_states(&sys, 1, 0.05, 21).remove(0);
        let traj = integrate(&sys, &start, &cfg, &DomainBox::default_for(&sys)).unwrap();
        for s in &traj.states {
            let jac = sys.eval_jacobians(s);
            let (f, h) = sys.embedded_rhs(s).unwrap();
            let gdot = &jac.dg_dx2 * sys.x2(&f) + &jac.dg_dz * h;
            assert!(gdot.norm() <= 1e-8, "{name}: |dg/dt| = {:.3e}", gdot.norm());
        }
        let r = verify_lemma1(&sys, &traj).unwrap();
        assert!(r <= 1e-6, "{name}: {r:.3e}");
    }
}

#[test]
fn flux_decay_determinant_matches_numeric() {
    let sg = cases::flux_decay_bus2();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let delta = rng.gen_range(-3.0..3.0);
        let eq = rng.gen_range(0.2..1.5);
        let at = Terminal { theta: rng.gen_range(-1.0..1.0), v: rng.gen_range(0.5..1.5) };
        let analytic = degeneration_diagnostics_sg(&sg, delta, eq, at, 1e-12).det_value;
        let numeric = sg_dg_dx2(&sg, delta, eq, at).determinant();
        assert!((analytic - numeric).abs() <= 1e-8, "{analytic} vs {numeric}");
        // and against differences of the injection itself
        let h = 1e-6;
        let p = |d: f64, e: f64| sg.injection(&[d, e], at);
        let (pd1, qd1) = p(delta + h, eq);
        let (pd0, qd0) = p(delta - h, eq);
        let (pe1, qe1) = p(delta, eq + h);
        let (pe0, qe0) = p(delta, eq - h);
        let fd = ((pd1 - pd0) * (qe1 - qe0) - (pe1 - pe0) * (qd1 - qd0)) / (4.0 * h * h);
        assert!((analytic - fd).abs() <= 1e-5 * analytic.abs().max(1.0));
    }
}

#[test]
fn degenerate_point_outputs() {
    let sg = cases::flux_decay_bus2();
    let at = Terminal { theta: -0.2, v: 1.03 };
    for delta in [-1.0, 0.0, 0.4, 1.2] {
        let eq = degenerate_eq(&sg, delta, at);
        let d = degeneration_diagnostics_sg(&sg, delta, eq, at, 1e-12);
        assert!(d.is_degenerate);
        assert!(d.pe.abs() <= 1e-8);
        assert!((d.qe + at.v * at.v / sg.xq).abs() <= 1e-8);
    }
}
