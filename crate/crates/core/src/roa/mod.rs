//! Region-of-attraction estimates for augmented synchronization.
//!
//! Three kinds of V-function are supported: the Krasovskii form fᵀPf certified through a
//! matrix inequality on the reduced Jacobian (type I), hand-built functions with a strict
//! decrease bound (type II), and non-strict functions closed by an invariant-set argument
//! (type III). Every set-membership claim is checked by sampling.

pub mod certify;
pub mod energy;
pub mod krasovskii;
pub mod sampler;

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::detectability::{DetectabilityVerdict, SystemVerdict};
use crate::error::{Error, Result};
use crate::model::{PowerSystem, SystemState};

pub use certify::{bisect_level, certify_type1, certify_type2, certify_type3, Region};
pub use energy::SwingEnergy;
pub use krasovskii::{
    fit_p, fit_p_from_jacobians, integrator_relaxation, krasovskii_value, krasovskii_vdot_matrix, lmi_objective,
    FitMethod, FitOptions, FitResult, KrasovskiiV,
};
pub use sampler::{sample_box, sample_sublevel, SampleSet, SamplerConfig};

/// s ↦ c·sᵖ
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaFn {
    pub c: f64,
    pub p: f64,
}

impl KappaFn {
    pub fn new(c: f64, p: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter {
                kind: "kappa".into(),
                name: "c, p".into(),
                reason: format!("need c > 0 and p >= 1, got c = {c}, p = {p}"),
            });
        }
        Ok(Self { c, p })
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.c * s.powf(self.p)
    }
}

/// Output whose convergence to zero is certified. Choosing f₂ is enough on non-degenerate
/// solutions because h = −(∂g/∂z)⁻¹(∂g/∂x₂)f₂ vanishes with f₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSelector {
    EtaIsH,
    EtaIsF2,
}

impl EtaSelector {
    pub fn eval(&self, system: &PowerSystem, s: &SystemState) -> Result<DVector<f64>> {
        match self {
            EtaSelector::EtaIsF2 => Ok(system.x2(&system.eval_f(s))),
            EtaSelector::EtaIsH => system.eval_h(s),
        }
    }
}

/// A V-function on (x, z).
pub trait VFunction: Send + Sync {
    fn describe(&self) -> String;
    fn value(&self, system: &PowerSystem, s: &SystemState) -> f64;
    /// Time derivative along the embedded ODE.
    fn vdot(&self, system: &PowerSystem, s: &SystemState) -> Result<f64>;
}

type ValueHook = Box<dyn Fn(&PowerSystem, &SystemState) -> f64 + Send + Sync>;
type RateHook = Box<dyn Fn(&PowerSystem, &SystemState) -> Result<f64> + Send + Sync>;

/// Hand-built V-function with 𝒱̇ ≤ −γ(‖η‖). Uniform continuity of 𝒱̇ is witnessed by a
/// bound on 𝒱̈ over the sampled set.
pub struct TypeIIV {
    pub name: String,
    pub value: ValueHook,
    pub vdot: RateHook,
    pub vddot: Option<RateHook>,
    pub lower_bound: f64,
    pub gamma: KappaFn,
    pub eta: EtaSelector,
    /// Claimed bound on |𝒱̈|.
    pub vddot_bound: f64,
}

impl fmt::Debug for TypeIIV {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TypeIIV").field("name", &self.name).field("gamma", &self.gamma).finish()
    }
}

impl VFunction for TypeIIV {
    fn describe(&self) -> String {
        format!("type II: {}", self.name)
    }
    fn value(&self, system: &PowerSystem, s: &SystemState) -> f64 {
        (self.value)(system, s)
    }
    fn vdot(&self, system: &PowerSystem, s: &SystemState) -> Result<f64> {
        (self.vdot)(system, s)
    }
}

/// Non-strict V-function. `zero_set_premise` states what must hold where 𝒱̇ = 0 for the
/// device certificates to apply (typically f₂ = 0).
pub struct TypeIIIV {
    pub name: String,
    pub value: ValueHook,
    pub vdot: RateHook,
    pub zero_set_premise: Option<Box<dyn Fn(&PowerSystem, &SystemState) -> bool + Send + Sync>>,
    pub eta: EtaSelector,
}

impl fmt::Debug for TypeIIIV {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TypeIIIV").field("name", &self.name).finish()
    }
}

impl VFunction for TypeIIIV {
    fn describe(&self) -> String {
        format!("type III: {}", self.name)
    }
    fn value(&self, system: &PowerSystem, s: &SystemState) -> f64 {
        (self.value)(system, s)
    }
    fn vdot(&self, system: &PowerSystem, s: &SystemState) -> Result<f64> {
        (self.vdot)(system, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoaVerdict {
    CertifiedSampled,
    Refuted,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoaCertificate {
    pub v_descriptor: String,
    pub level: Option<f64>,
    pub n_samples: usize,
    /// Max over samples of the decrease test statistic (λ_max of the LMI matrix for type I,
    /// 𝒱̇ + γ(‖η‖) for type II, 𝒱̇ for type III); must be negative (≤ 0 for type III).
    pub max_decrease_stat: f64,
    /// Smallest ln|det(∂g/∂z)| seen.
    pub min_log_det_dgdz: f64,
    /// Smallest reciprocal condition estimate of ∂g/∂z seen.
    pub min_rcond_dgdz: f64,
    /// Smallest distance of z to the faces of the domain box.
    pub z_margin: f64,
    /// Samples with 𝒱 within 1 % of the level, a rough measure of how well the boundary
    /// was explored.
    pub boundary_contacts: usize,
    pub verdict: RoaVerdict,
    pub counterexample: Option<Counterexample>,
    pub notes: Vec<String>,
    pub sampling_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedVerdict {
    pub property1: String,
    pub convergence: Option<String>,
    pub caveats: Vec<String>,
}

/// Chains a certified invariant set with the detectability verdict.
pub fn theorem4_verdict(cert: &RoaCertificate, detect: &DetectabilityVerdict) -> Result<CombinedVerdict> {
    if cert.verdict != RoaVerdict::CertifiedSampled {
        return Err(Error::ClaimUnavailable(format!(
            "region certificate is {:?}, not certified",
            cert.verdict
        )));
    }
    let set = match cert.level {
        Some(l) => format!("{{V <= {l}}}"),
        None => "the certified region".to_string(),
    };
    let mut caveats = vec![format!("evidence is sampled ({} samples), not a formal proof", cert.n_samples)];
    caveats.extend(cert.notes.iter().cloned());
    let property1 = format!("every solution starting in {set} keeps z bounded and has zdot -> 0 (Property 1)");
    let convergence = match detect.verdict {
        SystemVerdict::AsDetectableIfNondegenerate => {
            caveats.push("convergence claim holds for non-degenerate solutions".into());
            Some(format!("every non-degenerate solution starting in {set} converges to the equilibrium set"))
        }
        SystemVerdict::Unknown => {
            caveats.push("detectability unknown; no convergence claim".into());
            None
        }
    };
    Ok(CombinedVerdict { property1, convergence, caveats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectability::TheoremTag;

    fn cert(verdict: RoaVerdict) -> RoaCertificate {
        RoaCertificate {
            v_descriptor: "test".into(),
            level: Some(4.0),
            n_samples: 10,
            max_decrease_stat: -1.0,
            min_log_det_dgdz: 0.0,
            min_rcond_dgdz: 1.0,
            z_margin: 1.0,
            boundary_contacts: 0,
            verdict,
            counterexample: None,
            notes: vec![],
            sampling_only: true,
        }
    }

    fn detect(verdict: SystemVerdict) -> DetectabilityVerdict {
        DetectabilityVerdict { devices: vec![], verdict, theorem: TheoremTag::Modular }
    }

    #[test]
    fn refuted_certificate_gives_no_claim() {
        let r = theorem4_verdict(&cert(RoaVerdict::Refuted), &detect(SystemVerdict::AsDetectableIfNondegenerate));
        assert!(matches!(r, Err(Error::ClaimUnavailable(_))));
    }

    #[test]
    fn unknown_detectability_keeps_property1_only() {
        let r = theorem4_verdict(&cert(RoaVerdict::CertifiedSampled), &detect(SystemVerdict::Unknown)).unwrap();
        assert!(r.convergence.is_none());
        let r = theorem4_verdict(&cert(RoaVerdict::CertifiedSampled), &detect(SystemVerdict::AsDetectableIfNondegenerate))
            .unwrap();
        assert!(r.convergence.is_some());
    }

    #[test]
    fn kappa_rejects_bad_exponent() {
        assert!(KappaFn::new(1.0, 0.5).is_err());
        assert_eq!(KappaFn::new(2.0, 2.0).unwrap().eval(3.0), 18.0);
    }
}
