//! Swing energy of a classical generator feeding one other bus over a single line, and the
//! V-functions built from it.

use nalgebra::DVector;

use super::{EtaSelector, KappaFn, TypeIIIV, TypeIIV};
use crate::error::{Error, Result};
use crate::model::device::{ClassicalSg, ClassicalSgPi};
use crate::model::{PowerSystem, SystemState};

/// 𝒬 = ½Mω² + EV₁(1 − cos(δ − θ₁))/x'_d + B₁₂V₁V₂(1 − cos θ₁₂), optionally plus the
/// integrator term (ζ + P_g0 − p_d)²/(2k₂) when the generator carries a PI regulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingEnergy {
    pub m: f64,
    pub d: f64,
    pub e: f64,
    pub xd_prime: f64,
    pub b12: f64,
    /// (k1, k2, P_g0, p_d) for the PI generator.
    pub pi: Option<(f64, f64, f64, f64)>,
    omega: usize,
    delta: usize,
    zeta: Option<usize>,
    /// Positions of θ₁, V₁, θ₂, V₂ in z.
    z_idx: [usize; 4],
}

fn param(list: &[(&'static str, f64)], name: &str) -> f64 {
    list.iter().find(|(k, _)| *k == name).map(|(_, v)| *v).unwrap_or(0.0)
}

impl SwingEnergy {
    /// Requires a two-bus network whose only dynamic device is a classical generator.
    pub fn for_system(system: &PowerSystem) -> Result<Self> {
        let net = system.network();
        if net.n_bus() != 2 || system.m() != 4 {
            return Err(Error::Structural("swing energy needs two buses, both with a z slot".into()));
        }
        let gens: Vec<_> = system
            .devices()
            .iter()
            .filter(|d| d.device.kind() == ClassicalSgPi::KIND || d.device.kind() == ClassicalSg::KIND)
            .collect();
        if gens.len() != 1 || system.devices().iter().filter(|d| d.device.n() > 0).count() != 1 {
            return Err(Error::Structural("swing energy needs exactly one classical generator".into()));
        }
        let g = gens[0];
        let other = if g.bus == 1 { 2 } else { 1 };
        let p = g.device.params();
        let sg = net.slot(g.bus).unwrap();
        let so = net.slot(other).unwrap();
        let b12 = net.admittance.b[(g.bus - 1, other - 1)];
        let is_pi = g.device.kind() == ClassicalSgPi::KIND;
        let p_d = system.device_at(other).map(|d| param(&d.device.params(), "P_d")).unwrap_or(0.0);
        let pi = is_pi.then(|| (param(&p, "k1"), param(&p, "k2"), param(&p, "P_g0"), p_d));
        let off = g.x_offset;
        Ok(Self {
            m: param(&p, "M"),
            d: param(&p, "D"),
            e: param(&p, "E"),
            xd_prime: param(&p, "x_d_prime"),
            b12,
            pi,
            omega: if is_pi { off + 1 } else { off },
            delta: if is_pi { off + 2 } else { off + 1 },
            zeta: is_pi.then_some(off),
            z_idx: [2 * sg, 2 * sg + 1, 2 * so, 2 * so + 1],
        })
    }

    fn unpack(&self, s: &SystemState) -> (f64, f64, f64, f64, f64, f64) {
        let [a, b, c, d] = self.z_idx;
        (s.x[self.omega], s.x[self.delta], s.z[a], s.z[b], s.z[c], s.z[d])
    }

    /// 𝒬 alone.
    pub fn swing(&self, s: &SystemState) -> f64 {
        let (w, dl, t1, v1, t2, v2) = self.unpack(s);
        0.5 * self.m * w * w
            + self.e * v1 * (1.0 - (dl - t1).cos()) / self.xd_prime
            + self.b12 * v1 * v2 * (1.0 - (t1 - t2).cos())
    }

    fn integrator_gap(&self, s: &SystemState) -> Option<(f64, f64)> {
        let (_, k2, pg0, pd) = self.pi?;
        Some((s.x[self.zeta?] + pg0 - pd, k2))
    }

    /// 𝒬 plus the integrator term when present.
    pub fn value(&self, s: &SystemState) -> f64 {
        let extra = self.integrator_gap(s).map_or(0.0, |(u, k2)| u * u / (2.0 * k2));
        self.swing(s) + extra
    }

    /// Gradient of `value` with respect to x and z.
    pub fn gradient(&self, s: &SystemState) -> (DVector<f64>, DVector<f64>) {
        let (w, dl, t1, v1, t2, v2) = self.unpack(s);
        let mut gx = DVector::zeros(s.x.len());
        let mut gz = DVector::zeros(s.z.len());
        let (sa, ca) = (dl - t1).sin_cos();
        let (sb, cb) = (t1 - t2).sin_cos();
        gx[self.omega] = self.m * w;
        gx[self.delta] = self.e * v1 * sa / self.xd_prime;
        if let (Some(i), Some((u, k2))) = (self.zeta, self.integrator_gap(s)) {
            gx[i] = u / k2;
        }
        let [a, b, c, d] = self.z_idx;
        gz[a] = -self.e * v1 * sa / self.xd_prime + self.b12 * v1 * v2 * sb;
        gz[b] = self.e * (1.0 - ca) / self.xd_prime + self.b12 * v2 * (1.0 - cb);
        gz[c] = -self.b12 * v1 * v2 * sb;
        gz[d] = self.b12 * v1 * (1.0 - cb);
        (gx, gz)
    }

    /// d/dt of `value` along the embedded ODE by the chain rule.
    pub fn vdot(&self, system: &PowerSystem, s: &SystemState) -> Result<f64> {
        let (f, h) = system.embedded_rhs(s)?;
        let (gx, gz) = self.gradient(s);
        Ok(gx.dot(&f) + gz.dot(&h))
    }

    /// The closed form −(D + k₁)ω² (−Dω² without regulator).
    pub fn vdot_closed_form(&self, s: &SystemState) -> f64 {
        let k1 = self.pi.map_or(0.0, |p| p.0);
        -(self.d + k1) * s.x[self.omega].powi(2)
    }

    /// −2(D + k₁)ωω̇.
    pub fn vddot_closed_form(&self, system: &PowerSystem, s: &SystemState) -> f64 {
        let k1 = self.pi.map_or(0.0, |p| p.0);
        let f = system.eval_f(s);
        -2.0 * (self.d + k1) * s.x[self.omega] * f[self.omega]
    }

    pub fn omega_index(&self) -> usize {
        self.omega
    }

    /// Type-II function with γ(s) = (D + k₁)s² and η = f₂ = ω. `vddot_bound` is the claimed
    /// bound on |𝒱̈| to be checked by sampling.
    pub fn into_type2(self, vddot_bound: f64) -> Result<TypeIIV> {
        if self.pi.is_none() {
            return Err(Error::Structural("the type-II function needs the PI regulator".into()));
        }
        let gamma = KappaFn::new(self.d + self.pi.map_or(0.0, |p| p.0), 2.0)?;
        let a = self.clone();
        let b = self.clone();
        let c = self;
        Ok(TypeIIV {
            name: "swing energy with integrator term".into(),
            value: Box::new(move |_, s| a.value(s)),
            vdot: Box::new(move |sys, s| b.vdot(sys, s)),
            vddot: Some(Box::new(move |sys, s| Ok(c.vddot_closed_form(sys, s)))),
            lower_bound: 0.0,
            gamma,
            eta: EtaSelector::EtaIsF2,
            vddot_bound,
        })
    }

    /// Type-III function 𝒬 (or 𝒬 plus integrator term). On {𝒱̇ = 0} the premise is ω = 0,
    /// from which the generator certificate forces ω̇ = 0 on the invariant subset.
    pub fn into_type3(self, omega_tol: f64) -> TypeIIIV {
        let a = self.clone();
        let b = self.clone();
        let omega = self.omega;
        TypeIIIV {
            name: "swing energy".into(),
            value: Box::new(move |_, s| a.value(s)),
            vdot: Box::new(move |sys, s| b.vdot(sys, s)),
            zero_set_premise: Some(Box::new(move |_, s| s.x[omega].abs() <= omega_tol)),
            eta: EtaSelector::EtaIsF2,
        }
    }
}
