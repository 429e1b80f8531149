//! Dynamic devices attached to network buses.
//!
//! Every device sees only its own states and the voltage `(θ, V)` of its terminal bus,
//! which is what makes an assembled [`PowerSystem`](super::PowerSystem) modular. Local
//! state vectors are ordered with the x₁ block first, then the x₂ block. The power a
//! device injects into the network may depend on x₂ and the terminal voltage only.

use std::fmt;

use nalgebra::DMatrix;

use crate::detectability::{certify_device, DeviceCertificate};
use crate::error::{Error, Result};

/// Voltage phasor at the terminal bus of a device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terminal {
    pub theta: f64,
    pub v: f64,
}

/// Local partial derivatives of a device vector field.
pub struct RhsJacobian {
    /// n_i × n_i, local state order.
    pub df_dx: DMatrix<f64>,
    /// n_i × 2, columns (θ, V).
    pub df_dz: DMatrix<f64>,
}

/// Partial derivatives of the injected power (P, Q).
pub struct InjectionJacobian {
    /// 2 × n₂ᵢ.
    pub d_dx2: DMatrix<f64>,
    /// 2 × 2, columns (θ, V).
    pub d_dz: DMatrix<f64>,
}

pub trait Device: Send + Sync + fmt::Debug {
    /// Registry name of the device kind.
    fn kind(&self) -> &str;
    fn n_x1(&self) -> usize;
    fn n_x2(&self) -> usize;
    fn n(&self) -> usize {
        self.n_x1() + self.n_x2()
    }
    /// Local state names, x₁ block first.
    fn state_names(&self) -> Vec<&'static str>;
    fn params(&self) -> Vec<(&'static str, f64)>;
    /// Flat-start values of the local states.
    fn default_state(&self) -> Vec<f64>;
    fn rhs(&self, x: &[f64], at: Terminal) -> Vec<f64>;
    fn rhs_jacobian(&self, x: &[f64], at: Terminal) -> RhsJacobian;
    /// Injected (P, Q); `x2` is the local x₂ block.
    fn injection(&self, x2: &[f64], at: Terminal) -> (f64, f64);
    fn injection_jacobian(&self, x2: &[f64], at: Terminal) -> InjectionJacobian;
    /// Analytic AS-detectability certificate, when the device kind has one.
    fn certificate(&self) -> Option<DeviceCertificate> {
        None
    }
    /// Local index of the frequency deviation state, for devices that have one.
    fn frequency_state(&self) -> Option<usize> {
        None
    }
}

fn require_positive(kind: &str, name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            kind: kind.into(),
            name: name.into(),
            reason: format!("must be > 0, got {value}"),
        })
    }
}

fn require_finite(kind: &str, name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            kind: kind.into(),
            name: name.into(),
            reason: "must be finite".into(),
        })
    }
}

/// Classical generator (constant internal EMF behind x'd) with a PI frequency regulator.
/// States: x₁ = (ζ, ω), x₂ = (δ).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSgPi {
    pub m: f64,
    pub d: f64,
    pub e: f64,
    pub xd_prime: f64,
    pub pg0: f64,
    pub k1: f64,
    pub k2: f64,
}

impl ClassicalSgPi {
    pub const KIND: &'static str = "classical_sg_pi";

    pub fn new(m: f64, d: f64, e: f64, xd_prime: f64, pg0: f64, k1: f64, k2: f64) -> Result<Self> {
        for (n, v) in [("M", m), ("D", d), ("E", e), ("x_d_prime", xd_prime), ("k1", k1), ("k2", k2)] {
            require_positive(Self::KIND, n, v)?;
        }
        require_finite(Self::KIND, "P_g0", pg0)?;
        Ok(Self { m, d, e, xd_prime, pg0, k1, k2 })
    }

    pub fn electrical_power(&self, delta: f64, at: Terminal) -> (f64, f64) {
        let (s, c) = (delta - at.theta).sin_cos();
        let pe = self.e * at.v * s / self.xd_prime;
        let qe = self.e * at.v * c / self.xd_prime - at.v * at.v / self.xd_prime;
        (pe, qe)
    }
}

impl Device for ClassicalSgPi {
    fn kind(&self) -> &str {
        Self::KIND
    }
    fn n_x1(&self) -> usize {
        2
    }
    fn n_x2(&self) -> usize {
        1
    }
    fn state_names(&self) -> Vec<&'static str> {
        vec!["zeta", "omega", "delta"]
    }
    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("M", self.m),
            ("D", self.d),
            ("E", self.e),
            ("x_d_prime", self.xd_prime),
            ("P_g0", self.pg0),
            ("k1", self.k1),
            ("k2", self.k2),
        ]
    }
    fn default_state(&self) -> Vec<f64> {
        vec![0.0, 0.0, 0.0]
    }
    fn rhs(&self, x: &[f64], at: Terminal) -> Vec<f64> {
        let (zeta, omega, delta) = (x[0], x[1], x[2]);
        let (pe, _) = self.electrical_power(delta, at);
        let u = -self.k1 * omega + zeta;
        vec![
            -self.k2 * omega,
            (-self.d * omega - pe + self.pg0 + u) / self.m,
            omega,
        ]
    }
    fn rhs_jacobian(&self, x: &[f64], at: Terminal) -> RhsJacobian {
        let (s, c) = (x[2] - at.theta).sin_cos();
        let dpe_dphi = self.e * at.v * c / self.xd_prime;
        let dpe_dv = self.e * s / self.xd_prime;
        let mut df_dx = DMatrix::zeros(3, 3);
        df_dx[(0, 1)] = -self.k2;
        df_dx[(1, 0)] = 1.0 / self.m;
        df_dx[(1, 1)] = -(self.d + self.k1) / self.m;
        df_dx[(1, 2)] = -dpe_dphi / self.m;
        df_dx[(2, 1)] = 1.0;
        let mut df_dz = DMatrix::zeros(3, 2);
        df_dz[(1, 0)] = dpe_dphi / self.m;
        df_dz[(1, 1)] = -dpe_dv / self.m;
        RhsJacobian { df_dx, df_dz }
    }
    fn injection(&self, x2: &[f64], at: Terminal) -> (f64, f64) {
        self.electrical_power(x2[0], at)
    }
    fn injection_jacobian(&self, x2: &[f64], at: Terminal) -> InjectionJacobian {
        classical_injection_jacobian(self.e, self.xd_prime, x2[0], at)
    }
    fn certificate(&self) -> Option<DeviceCertificate> {
        certify_device(Self::KIND).ok()
    }
    fn frequency_state(&self) -> Option<usize> {
        Some(1)
    }
}

fn classical_injection_jacobian(e: f64, xdp: f64, delta: f64, at: Terminal) -> InjectionJacobian {
    let (s, c) = (delta - at.theta).sin_cos();
    let ev = e * at.v / xdp;
    InjectionJacobian {
        d_dx2: DMatrix::from_row_slice(2, 1, &[ev * c, -ev * s]),
        d_dz: DMatrix::from_row_slice(
            2,
            2,
            &[-ev * c, e * s / xdp, ev * s, e * c / xdp - 2.0 * at.v / xdp],
        ),
    }
}

/// Classical swing generator without frequency regulation. States: x₁ = (ω), x₂ = (δ).
/// Zero damping is allowed so that undamped reference cases can be built.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSg {
    pub m: f64,
    pub d: f64,
    pub e: f64,
    pub xd_prime: f64,
    pub pg: f64,
}

impl ClassicalSg {
    pub const KIND: &'static str = "classical_sg";

    pub fn new(m: f64, d: f64, e: f64, xd_prime: f64, pg: f64) -> Result<Self> {
        for (n, v) in [("M", m), ("E", e), ("x_d_prime", xd_prime)] {
            require_positive(Self::KIND, n, v)?;
        }
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter {
                kind: Self::KIND.into(),
                name: "D".into(),
                reason: format!("must be >= 0, got {d}"),
            });
        }
        require_finite(Self::KIND, "P_g", pg)?;
        Ok(Self { m, d, e, xd_prime, pg })
    }
}

impl Device for ClassicalSg {
    fn kind(&self) -> &str {
        Self::KIND
    }
    fn n_x1(&self) -> usize {
        1
    }
    fn n_x2(&self) -> usize {
        1
    }
    fn state_names(&self) -> Vec<&'static str> {
        vec!["omega", "delta"]
    }
    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![("M", self.m), ("D", self.d), ("E", self.e), ("x_d_prime", self.xd_prime), ("P_g", self.pg)]
    }
    fn default_state(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
    fn rhs(&self, x: &[f64], at: Terminal) -> Vec<f64> {
        let pe = self.e * at.v * (x[1] - at.theta).sin() / self.xd_prime;
        vec![(-self.d * x[0] - pe + self.pg) / self.m, x[0]]
    }
    fn rhs_jacobian(&self, x: &[f64], at: Terminal) -> RhsJacobian {
        let (s, c) = (x[1] - at.theta).sin_cos();
        let dpe_dphi = self.e * at.v * c / self.xd_prime;
        let df_dx = DMatrix::from_row_slice(2, 2, &[-self.d / self.m, -dpe_dphi / self.m, 1.0, 0.0]);
        let df_dz = DMatrix::from_row_slice(
            2,
            2,
            &[dpe_dphi / self.m, -self.e * s / self.xd_prime / self.m, 0.0, 0.0],
        );
        RhsJacobian { df_dx, df_dz }
    }
    fn injection(&self, x2: &[f64], at: Terminal) -> (f64, f64) {
        let (s, c) = (x2[0] - at.theta).sin_cos();
        (
            self.e * at.v * s / self.xd_prime,
            self.e * at.v * c / self.xd_prime - at.v * at.v / self.xd_prime,
        )
    }
    fn injection_jacobian(&self, x2: &[f64], at: Terminal) -> InjectionJacobian {
        classical_injection_jacobian(self.e, self.xd_prime, x2[0], at)
    }
    fn certificate(&self) -> Option<DeviceCertificate> {
        certify_device(Self::KIND).ok()
    }
    fn frequency_state(&self) -> Option<usize> {
        Some(0)
    }
}

/// Synchronous generator, flux-decay (one-axis) model. States: x₁ = (ω), x₂ = (δ, E'q).
#[derive(Debug, Clone, PartialEq)]
pub struct FluxDecaySg {
    pub m: f64,
    pub d: f64,
    pub td0_prime: f64,
    pub xq: f64,
    pub xd: f64,
    pub xd_prime: f64,
    pub pg: f64,
    pub ef: f64,
}

/// Electrical output of a flux-decay generator and its partials.
#[derive(Debug, Clone, Copy)]
pub struct FluxDecayPower {
    pub pe: f64,
    pub qe: f64,
    /// ∂/∂(δ−θ)
    pub dpe_dphi: f64,
    pub dqe_dphi: f64,
    pub dpe_deq: f64,
    pub dqe_deq: f64,
    pub dpe_dv: f64,
    pub dqe_dv: f64,
}

impl FluxDecaySg {
    pub const KIND: &'static str = "flux_decay_sg";

    #[allow(clippy::too_many_arguments)]
    pub fn new(m: f64, d: f64, td0_prime: f64, xq: f64, xd: f64, xd_prime: f64, pg: f64, ef: f64) -> Result<Self> {
        for (n, v) in [("M", m), ("D", d), ("T_d0_prime", td0_prime), ("x_q", xq), ("x_d_prime", xd_prime)] {
            require_positive(Self::KIND, n, v)?;
        }
        if !(xd > xd_prime) {
            return Err(Error::InvalidParameter {
                kind: Self::KIND.into(),
                name: "x_d".into(),
                reason: format!("x_d ({xd}) must exceed x_d_prime ({xd_prime})"),
            });
        }
        require_finite(Self::KIND, "P_g", pg)?;
        require_finite(Self::KIND, "E_f", ef)?;
        Ok(Self { m, d, td0_prime, xq, xd, xd_prime, pg, ef })
    }

    pub fn power(&self, delta: f64, eq: f64, at: Terminal) -> FluxDecayPower {
        let phi = delta - at.theta;
        let (s, c) = phi.sin_cos();
        let (s2, c2) = (2.0 * phi).sin_cos();
        let v = at.v;
        let k = (self.xd_prime - self.xq) / (2.0 * self.xq * self.xd_prime);
        let kq = (self.xd_prime + self.xq) / (2.0 * self.xq * self.xd_prime);
        let xdp = self.xd_prime;
        FluxDecayPower {
            pe: v * v * s2 * k + eq * v * s / xdp,
            qe: v * v * c2 * k + eq * v * c / xdp - kq * v * v,
            dpe_dphi: 2.0 * v * v * c2 * k + eq * v * c / xdp,
            dqe_dphi: -2.0 * v * v * s2 * k - eq * v * s / xdp,
            dpe_deq: v * s / xdp,
            dqe_deq: v * c / xdp,
            dpe_dv: 2.0 * v * s2 * k + eq * s / xdp,
            dqe_dv: 2.0 * v * c2 * k + eq * c / xdp - 2.0 * kq * v,
        }
    }
}

impl Device for FluxDecaySg {
    fn kind(&self) -> &str {
        Self::KIND
    }
    fn n_x1(&self) -> usize {
        1
    }
    fn n_x2(&self) -> usize {
        2
    }
    fn state_names(&self) -> Vec<&'static str> {
        vec!["omega", "delta", "Eq_prime"]
    }
    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("M", self.m),
            ("D", self.d),
            ("T_d0_prime", self.td0_prime),
            ("x_q", self.xq),
            ("x_d", self.xd),
            ("x_d_prime", self.xd_prime),
            ("P_g", self.pg),
            ("E_f", self.ef),
        ]
    }
    fn default_state(&self) -> Vec<f64> {
        vec![0.0, 0.0, 1.0]
    }
    fn rhs(&self, x: &[f64], at: Terminal) -> Vec<f64> {
        let (omega, delta, eq) = (x[0], x[1], x[2]);
        let pw = self.power(delta, eq, at);
        let c = (delta - at.theta).cos();
        let xdp = self.xd_prime;
        vec![
            (-self.d * omega - pw.pe + self.pg) / self.m,
            omega,
            (-self.xd / xdp * eq + (self.xd - xdp) * at.v * c / xdp + self.ef) / self.td0_prime,
        ]
    }
    fn rhs_jacobian(&self, x: &[f64], at: Terminal) -> RhsJacobian {
        let (delta, eq) = (x[1], x[2]);
        let pw = self.power(delta, eq, at);
        let (s, c) = (delta - at.theta).sin_cos();
        let xdp = self.xd_prime;
        let t = self.td0_prime;
        let mut df_dx = DMatrix::zeros(3, 3);
        df_dx[(0, 0)] = -self.d / self.m;
        df_dx[(0, 1)] = -pw.dpe_dphi / self.m;
        df_dx[(0, 2)] = -pw.dpe_deq / self.m;
        df_dx[(1, 0)] = 1.0;
        df_dx[(2, 1)] = -(self.xd - xdp) * at.v * s / (xdp * t);
        df_dx[(2, 2)] = -self.xd / (xdp * t);
        let mut df_dz = DMatrix::zeros(3, 2);
        df_dz[(0, 0)] = pw.dpe_dphi / self.m;
        df_dz[(0, 1)] = -pw.dpe_dv / self.m;
        df_dz[(2, 0)] = (self.xd - xdp) * at.v * s / (xdp * t);
        df_dz[(2, 1)] = (self.xd - xdp) * c / (xdp * t);
        RhsJacobian { df_dx, df_dz }
    }
    fn injection(&self, x2: &[f64], at: Terminal) -> (f64, f64) {
        let pw = self.power(x2[0], x2[1], at);
        (pw.pe, pw.qe)
    }
    fn injection_jacobian(&self, x2: &[f64], at: Terminal) -> InjectionJacobian {
        let pw = self.power(x2[0], x2[1], at);
        InjectionJacobian {
            d_dx2: DMatrix::from_row_slice(2, 2, &[pw.dpe_dphi, pw.dpe_deq, pw.dqe_dphi, pw.dqe_deq]),
            d_dz: DMatrix::from_row_slice(2, 2, &[-pw.dpe_dphi, pw.dpe_dv, -pw.dqe_dphi, pw.dqe_dv]),
        }
    }
    fn certificate(&self) -> Option<DeviceCertificate> {
        certify_device(Self::KIND).ok()
    }
    fn frequency_state(&self) -> Option<usize> {
        Some(0)
    }
}

/// Inverter-interfaced source with first-order power tracking and angle/voltage droop.
/// States: x₁ = ∅, x₂ = (P, Q).
#[derive(Debug, Clone, PartialEq)]
pub struct InverterPq {
    pub tau1: f64,
    pub tau2: f64,
    pub d1: f64,
    pub d2: f64,
    pub p_ref: f64,
    pub q_ref: f64,
    pub theta_ref: f64,
    pub v_ref: f64,
}

impl InverterPq {
    pub const KIND: &'static str = "inverter_pq";

    #[allow(clippy::too_many_arguments)]
    pub fn new(tau1: f64, tau2: f64, d1: f64, d2: f64, p_ref: f64, q_ref: f64, theta_ref: f64, v_ref: f64) -> Result<Self> {
        for (n, v) in [("tau1", tau1), ("tau2", tau2), ("d1", d1), ("d2", d2)] {
            require_positive(Self::KIND, n, v)?;
        }
        for (n, v) in [("P_ref", p_ref), ("Q_ref", q_ref), ("theta_ref", theta_ref), ("V_ref", v_ref)] {
            require_finite(Self::KIND, n, v)?;
        }
        Ok(Self { tau1, tau2, d1, d2, p_ref, q_ref, theta_ref, v_ref })
    }
}

impl Device for InverterPq {
    fn kind(&self) -> &str {
        Self::KIND
    }
    fn n_x1(&self) -> usize {
        0
    }
    fn n_x2(&self) -> usize {
        2
    }
    fn state_names(&self) -> Vec<&'static str> {
        vec!["P", "Q"]
    }
    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("d1", self.d1),
            ("d2", self.d2),
            ("P_ref", self.p_ref),
            ("Q_ref", self.q_ref),
            ("theta_ref", self.theta_ref),
            ("V_ref", self.v_ref),
        ]
    }
    fn default_state(&self) -> Vec<f64> {
        vec![self.p_ref, self.q_ref]
    }
    fn rhs(&self, x: &[f64], at: Terminal) -> Vec<f64> {
        vec![
            (-x[0] + self.p_ref - self.d1 * (at.theta - self.theta_ref)) / self.tau1,
            (-x[1] + self.q_ref - self.d2 * (at.v - self.v_ref)) / self.tau2,
        ]
    }
    fn rhs_jacobian(&self, _x: &[f64], _at: Terminal) -> RhsJacobian {
        RhsJacobian {
            df_dx: DMatrix::from_row_slice(2, 2, &[-1.0 / self.tau1, 0.0, 0.0, -1.0 / self.tau2]),
            df_dz: DMatrix::from_row_slice(2, 2, &[-self.d1 / self.tau1, 0.0, 0.0, -self.d2 / self.tau2]),
        }
    }
    fn injection(&self, x2: &[f64], _at: Terminal) -> (f64, f64) {
        (x2[0], x2[1])
    }
    fn injection_jacobian(&self, _x2: &[f64], _at: Terminal) -> InjectionJacobian {
        InjectionJacobian {
            d_dx2: DMatrix::identity(2, 2),
            d_dz: DMatrix::zeros(2, 2),
        }
    }
    fn certificate(&self) -> Option<DeviceCertificate> {
        certify_device(Self::KIND).ok()
    }
}

/// Constant-PQ load. `p_d`, `q_d` are consumed power, injected as (−p_d, −q_d).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstPqLoad {
    pub p_d: f64,
    pub q_d: f64,
}

impl ConstPqLoad {
    pub const KIND: &'static str = "const_pq_load";

    pub fn new(p_d: f64, q_d: f64) -> Result<Self> {
        require_finite(Self::KIND, "P_d", p_d)?;
        require_finite(Self::KIND, "Q_d", q_d)?;
        Ok(Self { p_d, q_d })
    }
}

impl Device for ConstPqLoad {
    fn kind(&self) -> &str {
        Self::KIND
    }
    fn n_x1(&self) -> usize {
        0
    }
    fn n_x2(&self) -> usize {
        0
    }
    fn state_names(&self) -> Vec<&'static str> {
        vec![]
    }
    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![("P_d", self.p_d), ("Q_d", self.q_d)]
    }
    fn default_state(&self) -> Vec<f64> {
        vec![]
    }
    fn rhs(&self, _x: &[f64], _at: Terminal) -> Vec<f64> {
        vec![]
    }
    fn rhs_jacobian(&self, _x: &[f64], _at: Terminal) -> RhsJacobian {
        RhsJacobian {
            df_dx: DMatrix::zeros(0, 0),
            df_dz: DMatrix::zeros(0, 2),
        }
    }
    fn injection(&self, _x2: &[f64], _at: Terminal) -> (f64, f64) {
        (-self.p_d, -self.q_d)
    }
    fn injection_jacobian(&self, _x2: &[f64], _at: Terminal) -> InjectionJacobian {
        InjectionJacobian {
            d_dx2: DMatrix::zeros(2, 0),
            d_dz: DMatrix::zeros(2, 2),
        }
    }
    fn certificate(&self) -> Option<DeviceCertificate> {
        certify_device(Self::KIND).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flux_decay_delta_dot_vanishes_at_zero_speed() {
        let sg = FluxDecaySg::new(0.02, 0.003, 1.0, 0.2, 0.896, 0.12, 1.63, 1.52).unwrap();
        let f = sg.rhs(&[0.0, 0.7, 1.1], Terminal { theta: 0.2, v: 0.98 });
        assert_eq!(f[1], 0.0);
    }

    #[test]
    fn inverter_at_reference_is_still() {
        let inv = InverterPq::new(10.0, 10.0, 0.1, 0.1, 0.85, -0.0365, 0.0833, 1.0).unwrap();
        let f = inv.rhs(&[0.85, 0.3], Terminal { theta: 0.0833, v: 1.2 });
        assert_eq!(f[0], 0.0);
    }

    #[test]
    fn flux_decay_requires_xd_above_xd_prime() {
        assert!(FluxDecaySg::new(0.02, 0.003, 1.0, 0.2, 0.1, 0.12, 1.63, 1.52).is_err());
    }

    #[test]
    fn pi_gains_must_be_positive() {
        assert!(ClassicalSgPi::new(0.075, 0.032, 1.01, 0.061, 0.72, 0.0, 0.02).is_err());
        assert!(ClassicalSgPi::new(0.075, 0.032, 1.01, 0.061, 0.72, 0.1, 0.02).is_ok());
    }

    #[test]
    fn inverter_injection_jacobian_is_identity() {
        let inv = InverterPq::new(10.0, 10.0, 0.1, 0.1, 0.85, -0.0365, 0.0833, 1.0).unwrap();
        let jac = inv.injection_jacobian(&[0.3, 0.1], Terminal { theta: 1.0, v: 0.9 });
        assert_eq!(jac.d_dx2, DMatrix::identity(2, 2));
    }
}
