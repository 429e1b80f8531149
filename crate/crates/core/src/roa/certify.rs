//! Sampled checkers for the three V-function types.

use rayon::prelude::*;

use super::krasovskii::KrasovskiiV;
use super::sampler::{sample_box, sample_sublevel, SampleSet, SamplerConfig};
use super::{Counterexample, RoaCertificate, RoaVerdict, TypeIIIV, TypeIIV, VFunction};
use crate::detectability::certify_device;
use crate::error::{Error, Result};
use crate::linalg::{det_sign_logabs, sym_max_eig, Factorized};
use crate::model::{PowerSystem, SystemState};
use crate::simulate::DomainBox;

/// Set over which a type-III function is checked.
#[derive(Debug, Clone)]
pub enum Region {
    Sublevel { level: f64, reference: SystemState },
    Box { center: SystemState, half_width: Vec<f64> },
}

/// Per-sample outcome. `stat` is the decrease statistic, `fail` the first failed check.
struct Probe {
    stat: f64,
    log_det: f64,
    rcond: f64,
    margin: f64,
    value: f64,
    fail: Option<String>,
}

fn algebraic_checks(system: &PowerSystem, s: &SystemState, domain: &DomainBox) -> (f64, f64, f64, Option<String>) {
    let jac = system.eval_jacobians(s);
    let (sign, log_det) = det_sign_logabs(&jac.dg_dz);
    let rcond = Factorized::new(&jac.dg_dz).map(|f| f.rcond).unwrap_or(0.0);
    let margin = domain.margin(s);
    let fail = if sign == 0.0 || Factorized::new(&jac.dg_dz).is_err() {
        Some(format!("dg/dz singular (rcond {rcond:.3e})"))
    } else if margin < 0.0 {
        Some(format!("state outside the domain box (margin {margin:.3e})"))
    } else {
        None
    };
    (log_det, rcond, margin, fail)
}

fn assemble(
    descriptor: String,
    level: Option<f64>,
    samples: &[SystemState],
    probes: Vec<Probe>,
    mut notes: Vec<String>,
    inconclusive: Option<String>,
) -> RoaCertificate {
    let mut cert = RoaCertificate {
        v_descriptor: descriptor,
        level,
        n_samples: samples.len(),
        max_decrease_stat: f64::NEG_INFINITY,
        min_log_det_dgdz: f64::INFINITY,
        min_rcond_dgdz: f64::INFINITY,
        z_margin: f64::INFINITY,
        boundary_contacts: 0,
        verdict: RoaVerdict::CertifiedSampled,
        counterexample: None,
        notes: Vec::new(),
        sampling_only: true,
    };
    for (s, p) in samples.iter().zip(probes) {
        cert.max_decrease_stat = cert.max_decrease_stat.max(p.stat);
        cert.min_log_det_dgdz = cert.min_log_det_dgdz.min(p.log_det);
        cert.min_rcond_dgdz = cert.min_rcond_dgdz.min(p.rcond);
        cert.z_margin = cert.z_margin.min(p.margin);
        if let Some(l) = level {
            if l > 0.0 && p.value >= 0.99 * l {
                cert.boundary_contacts += 1;
            }
        }
        if cert.counterexample.is_none() {
            if let Some(reason) = p.fail {
                cert.counterexample =
                    Some(Counterexample { x: s.x.as_slice().to_vec(), z: s.z.as_slice().to_vec(), reason });
                cert.verdict = RoaVerdict::Refuted;
            }
        }
    }
    if cert.verdict == RoaVerdict::CertifiedSampled {
        if let Some(why) = inconclusive {
            cert.verdict = RoaVerdict::Inconclusive;
            notes.push(why);
        }
    }
    cert.notes = notes;
    cert
}

fn exits_note(set: &SampleSet) -> Option<String> {
    (set.domain_exits > 0).then(|| {
        format!(
            "{} proposals inside the sublevel set fell outside the domain box; containment in the domain is not established",
            set.domain_exits
        )
    })
}

fn with_reference(reference: &SystemState, set: SampleSet) -> Vec<SystemState> {
    let mut states = Vec::with_capacity(set.states.len() + 1);
    states.push(reference.clone());
    states.extend(set.states);
    states
}

/// Type I: on samples of {𝒱 ≤ level} checks λ_max(Aᵀ(PJ + JᵀP)A) < 0, det(∂g/∂z) away from
/// zero and z inside the domain box. The reference state is included as the first sample.
pub fn certify_type1(
    system: &PowerSystem,
    v: &KrasovskiiV,
    level: f64,
    reference: &SystemState,
    cfg: &SamplerConfig,
) -> Result<RoaCertificate> {
    let domain = cfg.domain.clone().unwrap_or_else(|| DomainBox::default_for(system));
    let set = sample_sublevel(system, v, level, reference, cfg)?;
    let exits = exits_note(&set);
    let samples = with_reference(reference, set);
    let mut notes = Vec::new();
    let trivial = level <= 0.0;
    if trivial {
        notes.push("level 0: the set is {f = 0}, invariant without the matrix inequality".into());
    }
    let probes: Vec<Probe> = samples
        .par_iter()
        .map(|s| {
            let (log_det, rcond, margin, mut fail) = algebraic_checks(system, s, &domain);
            let stat = match v.vdot_matrix(system, s) {
                Ok(m) => sym_max_eig(&m),
                Err(_) => f64::INFINITY,
            };
            if fail.is_none() && !trivial && !(stat < 0.0) {
                fail = Some(format!("matrix inequality violated: lambda_max = {stat:.6e}"));
            }
            Probe { stat, log_det, rcond, margin, value: v.value(system, s), fail }
        })
        .collect();
    Ok(assemble(v.describe(), Some(level), &samples, probes, notes, exits))
}

/// Type II: on samples of {𝒱 ≤ level} checks 𝒱 ≥ lower bound, 𝒱̇ + γ(‖η‖) ≤ 0 (up to a
/// rounding allowance relative to the terms) and |𝒱̈| ≤ the claimed bound.
pub fn certify_type2(
    system: &PowerSystem,
    v: &TypeIIV,
    level: f64,
    reference: &SystemState,
    cfg: &SamplerConfig,
) -> Result<RoaCertificate> {
    let domain = cfg.domain.clone().unwrap_or_else(|| DomainBox::default_for(system));
    let set = sample_sublevel(system, v, level, reference, cfg)?;
    let exits = exits_note(&set);
    let samples = with_reference(reference, set);
    let mut notes = Vec::new();
    if v.vddot.is_none() {
        notes.push("no analytic second derivative supplied; uniform continuity not checked".into());
    }
    let probes: Vec<Probe> = samples
        .par_iter()
        .map(|s| {
            let (log_det, rcond, margin, mut fail) = algebraic_checks(system, s, &domain);
            let value = v.value(system, s);
            let mut stat = f64::INFINITY;
            if fail.is_none() {
                let vdot = v.vdot(system, s);
                let eta = v.eta.eval(system, s);
                match (vdot, eta) {
                    (Ok(vd), Ok(eta)) => {
                        let g = v.gamma.eval(eta.norm());
                        stat = vd + g;
                        let allowance = 1e-9 * (1.0 + vd.abs() + g);
                        if value < v.lower_bound {
                            fail = Some(format!("V = {value:.6e} below the lower bound {}", v.lower_bound));
                        } else if stat > allowance {
                            fail = Some(format!("Vdot + gamma(|eta|) = {stat:.6e} > 0"));
                        } else if let Some(hook) = &v.vddot {
                            match hook(system, s) {
                                Ok(a) if a.abs() <= v.vddot_bound => {}
                                Ok(a) => fail = Some(format!("|Vddot| = {:.6e} exceeds {}", a.abs(), v.vddot_bound)),
                                Err(e) => fail = Some(format!("Vddot evaluation failed: {e}")),
                            }
                        }
                    }
                    (Err(e), _) | (_, Err(e)) => fail = Some(format!("evaluation failed: {e}")),
                }
            }
            Probe { stat, log_det, rcond, margin, value, fail }
        })
        .collect();
    Ok(assemble(v.describe(), Some(level), &samples, probes, notes, exits))
}

/// Type III: checks 𝒱̇ ≤ 0 on samples of the region; where |𝒱̇| ≤ zero_tol the function's
/// premise must hold and every device must carry a certificate, which then confines the
/// largest invariant subset to {η = 0}. A box region gives no invariance evidence, so the
/// best outcome there is inconclusive.
pub fn certify_type3(
    system: &PowerSystem,
    v: &TypeIIIV,
    region: &Region,
    cfg: &SamplerConfig,
    zero_tol: f64,
) -> Result<RoaCertificate> {
    let domain = cfg.domain.clone().unwrap_or_else(|| DomainBox::default_for(system));
    let mut notes = Vec::new();
    let (samples, level, mut inconclusive) = match region {
        Region::Sublevel { level, reference } => {
            let set = sample_sublevel(system, v, *level, reference, cfg)?;
            let note = exits_note(&set);
            (with_reference(reference, set), Some(*level), note)
        }
        Region::Box { center, half_width } => (
            sample_box(system, center, half_width, cfg)?,
            None,
            Some("box region: positive invariance is not established by sampling".to_string()),
        ),
    };
    let missing: Vec<String> = system
        .devices()
        .iter()
        .filter(|d| !certify_device(d.device.kind()).map(|c| c.holds()).unwrap_or(false))
        .map(|d| format!("{} at bus {}", d.device.kind(), d.bus))
        .collect();
    if !missing.is_empty() && inconclusive.is_none() {
        inconclusive = Some(format!("no invariant-set certificate for {}", missing.join(", ")));
    }
    let probes: Vec<Probe> = samples
        .par_iter()
        .map(|s| {
            let (log_det, rcond, margin, mut fail) = algebraic_checks(system, s, &domain);
            let mut stat = f64::INFINITY;
            if fail.is_none() {
                match v.vdot(system, s) {
                    Ok(vd) => {
                        stat = vd;
                        if vd > zero_tol {
                            fail = Some(format!("Vdot = {vd:.6e} > 0"));
                        }
                    }
                    Err(e) => fail = Some(format!("evaluation failed: {e}")),
                }
            }
            Probe { stat, log_det, rcond, margin, value: v.value(system, s), fail }
        })
        .collect();
    let premise_failures = samples
        .iter()
        .zip(&probes)
        .filter(|(_, p)| p.fail.is_none() && p.stat.abs() <= zero_tol)
        .filter(|(s, _)| v.zero_set_premise.as_ref().is_some_and(|f| !f(system, s)))
        .count();
    if premise_failures > 0 && inconclusive.is_none() {
        inconclusive = Some(format!("{premise_failures} samples with Vdot = 0 violate the zero-set premise"));
    }
    if v.zero_set_premise.is_none() {
        notes.push("no zero-set premise supplied".into());
    }
    Ok(assemble(v.describe(), level, &samples, probes, notes, inconclusive))
}

/// Largest level in [lo, hi] (to within the final bracket) whose certificate comes back
/// certified, found by bisection. Returns None when `lo` itself is not certified.
pub fn bisect_level(
    lo: f64,
    hi: f64,
    steps: usize,
    mut certify: impl FnMut(f64) -> Result<RoaCertificate>,
) -> Result<Option<(f64, RoaCertificate)>> {
    if !(lo <= hi) {
        return Err(Error::InvalidParameter {
            kind: "bisection".into(),
            name: "bracket".into(),
            reason: format!("need lo <= hi, got [{lo}, {hi}]"),
        });
    }
    let first = certify(lo)?;
    if first.verdict != RoaVerdict::CertifiedSampled {
        return Ok(None);
    }
    let top = certify(hi)?;
    if top.verdict == RoaVerdict::CertifiedSampled {
        return Ok(Some((hi, top)));
    }
    let (mut a, mut b, mut best) = (lo, hi, first);
    for _ in 0..steps {
        let mid = 0.5 * (a + b);
        let c = certify(mid)?;
        if c.verdict == RoaVerdict::CertifiedSampled {
            a = mid;
            best = c;
        } else {
            b = mid;
        }
    }
    Ok(Some((a, best)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::roa::SwingEnergy;

    fn cfg() -> SamplerConfig {
        SamplerConfig { n_samples: 80, burn_in: 10, thin: 1, max_chord: 0.3, ..SamplerConfig::default() }
    }

    #[test]
    fn smsl_type2_is_certified() {
        let sys = cases::smsl();
        let eq = cases::smsl_equilibrium(&sys);
        let v = SwingEnergy::for_system(&sys).unwrap().into_type2(1e3).unwrap();
        let cert = certify_type2(&sys, &v, 0.05, &eq, &cfg()).unwrap();
        assert_eq!(cert.verdict, RoaVerdict::CertifiedSampled, "{cert:?}");
        assert!(cert.sampling_only);
    }

    #[test]
    fn tight_vddot_bound_is_refuted_with_counterexample() {
        let sys = cases::smsl();
        let eq = cases::smsl_equilibrium(&sys);
        let v = SwingEnergy::for_system(&sys).unwrap().into_type2(1e-9).unwrap();
        let cert = certify_type2(&sys, &v, 0.05, &eq, &cfg()).unwrap();
        assert_eq!(cert.verdict, RoaVerdict::Refuted);
        assert!(cert.counterexample.is_some());
    }

    #[test]
    fn bisection_finds_threshold() {
        let fake = |l: f64| {
            let mut c = RoaCertificate {
                v_descriptor: String::new(),
                level: Some(l),
                n_samples: 1,
                max_decrease_stat: -1.0,
                min_log_det_dgdz: 0.0,
                min_rcond_dgdz: 1.0,
                z_margin: 1.0,
                boundary_contacts: 0,
                verdict: RoaVerdict::CertifiedSampled,
                counterexample: None,
                notes: vec![],
                sampling_only: true,
            };
            if l > 2.5 {
                c.verdict = RoaVerdict::Refuted;
            }
            Ok(c)
        };
        let (l, _) = bisect_level(0.0, 4.0, 30, fake).unwrap().unwrap();
        assert!((l - 2.5).abs() < 1e-6);
        assert!(bisect_level(3.0, 4.0, 5, fake).unwrap().is_none());
    }
}
