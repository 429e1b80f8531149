//! Non-degeneracy of solutions, the ẋ₂ identity, per-device detectability certificates and
//! their composition, and degeneracy diagnostics for the flux-decay generator.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{left_inverse, singular_values, spectral_norm};
use crate::model::device::{ClassicalSg, ClassicalSgPi, ConstPqLoad, FluxDecaySg, InverterPq, Terminal};
use crate::model::{PowerSystem, SystemState};
use crate::simulate::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateRoute {
    /// x₁ is empty; detectability follows from non-degeneracy alone.
    NoX1,
    /// Boundedness (condition 1) and invariant-set (condition 2) arguments.
    BoundedInvariantConditions,
    /// No dynamic states at all.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceCertificate {
    pub kind: String,
    pub route: CertificateRoute,
    pub holds_condition1: bool,
    pub condition1_justification: String,
    pub holds_condition2: bool,
    pub condition2_justification: String,
    pub assumptions: Vec<String>,
}

impl DeviceCertificate {
    pub fn holds(&self) -> bool {
        self.holds_condition1 && self.holds_condition2
    }
}

fn swing(kind: &str, with_integrator: bool) -> DeviceCertificate {
    let mut c1 = String::from("omega = d(delta)/dt with bounded delta; the swing equation then bounds omega");
    let mut c2 = String::from("on an invariant subset of {f2 = 0} omega is identically 0, so omega_dot = 0");
    if with_integrator {
        c1.push_str("; zeta(t) = zeta(0) - k2 (delta(t) - delta(0)) is bounded too");
        c2.push_str(" and zeta_dot = -k2 omega = 0");
    }
    DeviceCertificate {
        kind: kind.into(),
        route: CertificateRoute::BoundedInvariantConditions,
        holds_condition1: true,
        condition1_justification: c1,
        holds_condition2: true,
        condition2_justification: c2,
        assumptions: vec!["terminal voltage V > 0".into()],
    }
}

/// Hard-wired certificate for a built-in device kind.
pub fn certify_device(kind: &str) -> Result<DeviceCertificate> {
    match kind {
        ClassicalSgPi::KIND => Ok(swing(kind, true)),
        ClassicalSg::KIND | FluxDecaySg::KIND => Ok(swing(kind, false)),
        InverterPq::KIND => Ok(DeviceCertificate {
            kind: kind.into(),
            route: CertificateRoute::NoX1,
            holds_condition1: true,
            condition1_justification: "x1 is empty".into(),
            holds_condition2: true,
            condition2_justification: "x1 is empty; dg/dx2 is the identity".into(),
            assumptions: vec![],
        }),
        ConstPqLoad::KIND => Ok(DeviceCertificate {
            kind: kind.into(),
            route: CertificateRoute::Static,
            holds_condition1: true,
            condition1_justification: "no dynamic states".into(),
            holds_condition2: true,
            condition2_justification: "no dynamic states".into(),
            assumptions: vec![],
        }),
        other => Err(Error::UnknownDeviceKind(other.into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonDegeneracy {
    NonDegenerate,
    DegenerateRank,
    DegenerateUnbounded,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonDegeneracyOptions {
    /// Relative rank threshold: full rank iff σ_min > rank_tol · σ_max.
    pub rank_tol: f64,
    pub m_cap: f64,
}

impl Default for NonDegeneracyOptions {
    fn default() -> Self {
        Self { rank_tol: 1e-8, m_cap: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonDegeneracyReport {
    pub ranks: Vec<usize>,
    pub sigma_min: Vec<f64>,
    /// ‖(∂g/∂x₂)†(∂g/∂z)‖₂ per sample (infinite where the rank drops).
    pub bounds: Vec<f64>,
    pub m_hat: f64,
    pub first_degenerate: Option<usize>,
    pub verdict: NonDegeneracy,
}

pub fn check_nondegeneracy(system: &PowerSystem, traj: &Trajectory, opts: NonDegeneracyOptions) -> NonDegeneracyReport {
    check_nondegeneracy_states(system, &traj.states, opts)
}

pub fn check_nondegeneracy_states(
    system: &PowerSystem,
    states: &[SystemState],
    opts: NonDegeneracyOptions,
) -> NonDegeneracyReport {
    let n2 = system.n2();
    let mut ranks = Vec::with_capacity(states.len());
    let mut sigma_min = Vec::with_capacity(states.len());
    let mut bounds = Vec::with_capacity(states.len());
    let mut m_hat = 0.0f64;
    let mut first_degenerate = None;
    let mut numerical_failure = false;
    let mut any_rank = false;
    let mut any_unbounded = false;
    for (k, s) in states.iter().enumerate() {
        let jac = system.eval_jacobians(s);
        if n2 == 0 {
            ranks.push(0);
            sigma_min.push(f64::INFINITY);
            bounds.push(0.0);
            continue;
        }
        let sv = singular_values(&jac.dg_dx2);
        if sv.iter().any(|v| !v.is_finite()) {
            numerical_failure = true;
            ranks.push(0);
            sigma_min.push(f64::NAN);
            bounds.push(f64::NAN);
            continue;
        }
        let smax = sv.max();
        let rank = sv.iter().filter(|v| **v > opts.rank_tol * smax).count();
        ranks.push(rank);
        sigma_min.push(sv.min());
        if rank < n2 {
            any_rank = true;
            first_degenerate.get_or_insert(k);
            bounds.push(f64::INFINITY);
            continue;
        }
        match left_inverse(&jac.dg_dx2) {
            Some(pinv) => {
                let b = spectral_norm(&(pinv * &jac.dg_dz));
                m_hat = m_hat.max(b);
                if !(b <= opts.m_cap) {
                    any_unbounded = true;
                    first_degenerate.get_or_insert(k);
                }
                bounds.push(b);
            }
            None => {
                any_rank = true;
                first_degenerate.get_or_insert(k);
                bounds.push(f64::INFINITY);
            }
        }
    }
    let verdict = if any_rank {
        NonDegeneracy::DegenerateRank
    } else if any_unbounded {
        NonDegeneracy::DegenerateUnbounded
    } else if numerical_failure || states.is_empty() {
        NonDegeneracy::Inconclusive
    } else {
        NonDegeneracy::NonDegenerate
    };
    NonDegeneracyReport { ranks, sigma_min, bounds, m_hat, first_degenerate, verdict }
}

/// ‖f₂ + (∂g/∂x₂)†(∂g/∂z) h‖ at one state.
pub fn lemma1_residual(system: &PowerSystem, s: &SystemState, rank_tol: f64) -> Result<Option<f64>> {
    let jac = system.eval_jacobians(s);
    if system.n2() == 0 {
        return Ok(Some(0.0));
    }
    let sv = singular_values(&jac.dg_dx2);
    if sv.min() <= rank_tol * sv.max() {
        return Ok(None);
    }
    let Some(pinv) = left_inverse(&jac.dg_dx2) else { return Ok(None) };
    let (f, h) = system.embedded_rhs(s)?;
    let f2 = system.x2(&f);
    Ok(Some((f2 + pinv * (&jac.dg_dz * h)).norm()))
}

/// Largest residual of the ẋ₂ identity over the given states.
pub fn verify_lemma1_states(system: &PowerSystem, states: &[SystemState]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (k, s) in states.iter().enumerate() {
        match lemma1_residual(system, s, 1e-8)? {
            Some(r) => worst = worst.max(r),
            None => return Err(Error::RankDeficiency { sample: k }),
        }
    }
    Ok(worst)
}

pub fn verify_lemma1(system: &PowerSystem, traj: &Trajectory) -> Result<f64> {
    verify_lemma1_states(system, &traj.states)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemVerdict {
    AsDetectableIfNondegenerate,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremTag {
    /// x₁ = ∅ for the whole system.
    #[serde(rename = "theorem_1")]
    EmptyX1,
    /// A single dynamic subsystem with x₁ ≠ ∅.
    #[serde(rename = "theorem_2")]
    Monolithic,
    /// Composition over modular subsystems.
    #[serde(rename = "theorem_3")]
    Modular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceAssessment {
    pub bus: usize,
    pub kind: String,
    pub certificate: Option<DeviceCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityVerdict {
    pub devices: Vec<DeviceAssessment>,
    pub verdict: SystemVerdict,
    pub theorem: TheoremTag,
}

/// Composes per-device certificates after checking the modular structure by Jacobian
/// sparsity at the flat start and at a few perturbed states.
pub fn assess_detectability(system: &PowerSystem) -> Result<DetectabilityVerdict> {
    let base = system.flat_start();
    system.check_modularity(&base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..3 {
        let mut s = base.clone();
        s.x.iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        s.z.iter_mut().enumerate().for_each(|(k, v)| *v += rng.gen_range(-0.2..0.2) * if k % 2 == 0 { 1.0 } else { 0.5 });
        system.check_modularity(&s)?;
    }
    let devices: Vec<DeviceAssessment> = system
        .devices()
        .iter()
        .map(|d| DeviceAssessment {
            bus: d.bus,
            kind: d.device.kind().to_string(),
            certificate: d.device.certificate(),
        })
        .collect();
    let dynamic: Vec<_> = system.devices().iter().filter(|d| d.device.n() > 0).collect();
    let all_certified = devices
        .iter()
        .zip(system.devices())
        .filter(|(_, d)| d.device.n() > 0)
        .all(|(a, _)| a.certificate.as_ref().is_some_and(DeviceCertificate::holds));
    let theorem = if system.n1() == 0 {
        TheoremTag::EmptyX1
    } else if dynamic.len() == 1 {
        TheoremTag::Monolithic
    } else {
        TheoremTag::Modular
    };
    let verdict = if all_certified { SystemVerdict::AsDetectableIfNondegenerate } else { SystemVerdict::Unknown };
    Ok(DetectabilityVerdict { devices, verdict, theorem })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgDegeneration {
    pub det_value: f64,
    /// (x'd − xq)/xq · V cos(δ − θ) + E'q
    pub bracket: f64,
    pub pe: f64,
    pub qe: f64,
    pub is_degenerate: bool,
    /// V = 0 also makes ∂g/∂z singular.
    pub violates_assumption1: bool,
}

/// Closed-form det(∂g/∂x₂) of a flux-decay generator and its output at degeneracy.
pub fn degeneration_diagnostics_sg(sg: &FluxDecaySg, delta: f64, eq: f64, at: Terminal, tol: f64) -> SgDegeneration {
    let v = at.v;
    let bracket = (sg.xd_prime - sg.xq) / sg.xq * v * (delta - at.theta).cos() + eq;
    let det_value = v * v / (sg.xd_prime * sg.xd_prime) * bracket;
    let pw = sg.power(delta, eq, at);
    SgDegeneration {
        det_value,
        bracket,
        pe: pw.pe,
        qe: pw.qe,
        is_degenerate: bracket.abs() <= tol || v == 0.0,
        violates_assumption1: v == 0.0,
    }
}

/// The 2×2 ∂(P, Q)/∂(δ, E'q) block assembled numerically from the device model.
pub fn sg_dg_dx2(sg: &FluxDecaySg, delta: f64, eq: f64, at: Terminal) -> DMatrix<f64> {
    use crate::model::Device;
    sg.injection_jacobian(&[delta, eq], at).d_dx2
}

/// E'q that makes the generator degenerate at the given angle and voltage.
pub fn degenerate_eq(sg: &FluxDecaySg, delta: f64, at: Terminal) -> f64 {
    -(sg.xd_prime - sg.xq) / sg.xq * at.v * (delta - at.theta).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sg() -> FluxDecaySg {
        FluxDecaySg::new(0.02, 0.003, 1.0, 0.20, 0.896, 0.12, 1.63, 1.52).unwrap()
    }

    #[test]
    fn hand_computed_determinant() {
        let d = degeneration_diagnostics_sg(&sg(), 0.0, 1.0, Terminal { theta: 0.0, v: 1.0 }, 1e-12);
        let expected = (1.0 / 0.0144) * ((0.12 - 0.20) / 0.20 + 1.0);
        assert!((d.det_value - expected).abs() < 1e-12);
        assert!((d.det_value - 41.666_666_666_666_67).abs() < 1e-9);
        assert!(!d.is_degenerate);
    }

    #[test]
    fn degenerate_output_identities() {
        let g = sg();
        let at = Terminal { theta: 0.1, v: 0.97 };
        let delta = 0.6;
        let eq = degenerate_eq(&g, delta, at);
        let d = degeneration_diagnostics_sg(&g, delta, eq, at, 1e-12);
        assert!(d.is_degenerate);
        assert!(d.pe.abs() <= 1e-8);
        assert!((d.qe + at.v * at.v / g.xq).abs() <= 1e-8);
    }

    #[test]
    fn zero_voltage_flags_assumption1() {
        let d = degeneration_diagnostics_sg(&sg(), 0.3, 1.0, Terminal { theta: 0.0, v: 0.0 }, 1e-12);
        assert_eq!(d.det_value, 0.0);
        assert!(d.violates_assumption1);
    }

    #[test]
    fn builtin_certificates() {
        let c = certify_device("flux_decay_sg").unwrap();
        assert!(c.holds_condition1 && c.holds_condition2);
        assert_eq!(certify_device("inverter_pq").unwrap().route, CertificateRoute::NoX1);
        assert_eq!(certify_device("const_pq_load").unwrap().route, CertificateRoute::Static);
        assert!(matches!(certify_device("hvdc"), Err(Error::UnknownDeviceKind(_))));
    }
}
