//! Time integration of the embedded ODE ẋ = f, ż = h with algebraic re-projection.

pub mod integrator;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::equilibrium::nearest_equilibrium;
use crate::error::{Error, Result};
use crate::linalg::{det_sign_logabs, max_abs, Factorized};
use crate::model::{PowerSystem, SystemState};
pub use integrator::{EmbeddedRk, Integrator, IntegratorRegistry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub method: String,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub initial_step: f64,
    /// Accepted steps between unconditional re-projections of z.
    pub reprojection_interval: usize,
    /// ‖g‖∞ above which z is re-projected immediately.
    pub g_drift_tol: f64,
    pub g_tol: f64,
    pub t_end: f64,
    /// Samples are stored at most this often (0 stores every accepted step).
    pub output_interval: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: "dopri5".into(),
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 0.1,
            initial_step: 1e-3,
            reprojection_interval: 20,
            g_drift_tol: 1e-9,
            g_tol: 1e-10,
            t_end: 100.0,
            output_interval: 0.0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("initial_step", self.initial_step),
            ("g_drift_tol", self.g_drift_tol),
            ("g_tol", self.g_tol),
            ("t_end", self.t_end),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    kind: "integrator".into(),
                    name: name.into(),
                    reason: format!("must be > 0, got {v}"),
                });
            }
        }
        if self.reprojection_interval == 0 {
            return Err(Error::InvalidParameter {
                kind: "integrator".into(),
                name: "reprojection_interval".into(),
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Box over (x, z) describing the working region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
}

impl DomainBox {
    /// θ ∈ [−π, π], V ∈ [0.5, 1.5] and |x| ≤ 100.
    pub fn default_for(system: &PowerSystem) -> Self {
        let (n, m) = (system.n(), system.m());
        let mut z_lower = vec![0.0; m];
        let mut z_upper = vec![0.0; m];
        for k in 0..m / 2 {
            z_lower[2 * k] = -std::f64::consts::PI;
            z_upper[2 * k] = std::f64::consts::PI;
            z_lower[2 * k + 1] = 0.5;
            z_upper[2 * k + 1] = 1.5;
        }
        Self { x_lower: vec![-100.0; n], x_upper: vec![100.0; n], z_lower, z_upper }
    }

    pub fn validate(&self, system: &PowerSystem) -> Result<()> {
        if self.x_lower.len() != system.n()
            || self.x_upper.len() != system.n()
            || self.z_lower.len() != system.m()
            || self.z_upper.len() != system.m()
        {
            return Err(Error::Dimension("domain box does not match the system".into()));
        }
        let ok = self.x_lower.iter().zip(&self.x_upper).all(|(l, u)| l < u)
            && self.z_lower.iter().zip(&self.z_upper).enumerate().all(|(k, (l, u))| l < u && (k % 2 == 0 || *l > 0.0));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                kind: "domain".into(),
                name: "bounds".into(),
                reason: "need lower < upper and a positive voltage lower bound".into(),
            })
        }
    }

    /// Smallest distance to a face; negative when outside.
    pub fn margin(&self, state: &SystemState) -> f64 {
        let mut m = f64::INFINITY;
        for (i, v) in state.x.iter().enumerate() {
            m = m.min(v - self.x_lower[i]).min(self.x_upper[i] - v);
        }
        for (i, v) in state.z.iter().enumerate() {
            m = m.min(v - self.z_lower[i]).min(self.z_upper[i] - v);
        }
        m
    }

    pub fn contains(&self, state: &SystemState) -> bool {
        self.margin(state) >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTEnd,
    Impasse,
    LeftDomain,
    Diverged,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::Impasse => "impasse",
            Termination::LeftDomain => "left_domain",
            Termination::Diverged => "diverged",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::ReachedTEnd, Self::Impasse, Self::LeftDomain, Self::Diverged]
            .into_iter()
            .find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub projections: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub zdot_norm: Vec<f64>,
    pub f_norm: Vec<f64>,
    /// Sign and ln|·| of det(∂g/∂z) per sample.
    pub det_sign: Vec<f64>,
    pub det_logabs: Vec<f64>,
    /// V-function values, when one is attached.
    pub v_value: Option<Vec<f64>>,
    pub termination: Termination,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn last_state(&self) -> Option<&SystemState> {
        self.states.last()
    }

    /// Index of the first sample inside the trailing window of length `window`.
    pub fn window_start(&self, window: f64) -> Result<usize> {
        let span = self.span();
        if window > span {
            return Err(Error::WindowTooLong { window, span });
        }
        let t0 = self.times.last().copied().unwrap_or(0.0) - window;
        Ok(self.times.iter().position(|&t| t >= t0).unwrap_or(0))
    }

    /// A trajectory holding one state, sampled at the given times.
    pub fn constant(system: &PowerSystem, state: &SystemState, times: &[f64]) -> Result<Self> {
        let sample = Sample::evaluate(system, state)?;
        let n = times.len();
        Ok(Self {
            times: times.to_vec(),
            states: vec![state.clone(); n],
            zdot_norm: vec![sample.h.norm(); n],
            f_norm: vec![sample.f.norm(); n],
            det_sign: vec![sample.det.0; n],
            det_logabs: vec![sample.det.1; n],
            v_value: None,
            termination: Termination::ReachedTEnd,
            stats: IntegrationStats::default(),
        })
    }

    /// Fills the V-function channel.
    pub fn attach_v(&mut self, v: impl Fn(&SystemState) -> f64) {
        self.v_value = Some(self.states.iter().map(v).collect());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    pub g_tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { g_tol: 1e-10, max_iter: 50 }
    }
}

/// Solves g(x₂, z) = 0 for z by damped Newton from `z_guess`. Returns z and the iteration count.
pub fn project_algebraic(
    system: &PowerSystem,
    x2: &DVector<f64>,
    z_guess: &DVector<f64>,
    opts: ProjectionOptions,
) -> Result<(DVector<f64>, usize)> {
    let mut z = z_guess.clone();
    let mut g = system.eval_g_x2(x2, &z);
    let mut gn = max_abs(&g);
    let mut x = DVector::zeros(system.n());
    for it in 0..=opts.max_iter {
        if !gn.is_finite() {
            return Err(Error::NewtonDivergence { iterations: it, residual: gn });
        }
        if gn <= opts.g_tol {
            return Ok((z, it));
        }
        if it == opts.max_iter {
            break;
        }
        system.set_x2(&mut x, x2);
        let jac = system.eval_jacobians(&SystemState::new(x.clone(), z.clone()));
        let step = Factorized::new(&jac.dg_dz)?.solve_vec(&g);
        let mut alpha = 1.0;
        loop {
            let trial = &z - &step * alpha;
            let gt = system.eval_g_x2(x2, &trial);
            let gtn = max_abs(&gt);
            if gtn.is_finite() && (gtn < gn || alpha < 1e-3) {
                z = trial;
                g = gt;
                gn = gtn;
                break;
            }
            alpha *= 0.5;
        }
    }
    Err(Error::NewtonDivergence { iterations: opts.max_iter, residual: gn })
}

/// Diagnostics evaluated at one state.
struct Sample {
    f: DVector<f64>,
    h: DVector<f64>,
    det: (f64, f64),
}

impl Sample {
    fn evaluate(system: &PowerSystem, state: &SystemState) -> Result<Self> {
        let f = system.eval_f(state);
        let jac = system.eval_jacobians(state);
        let lu = Factorized::new(&jac.dg_dz)?;
        let h = -lu.solve_vec(&(&jac.dg_dx2 * system.x2(&f)));
        Ok(Self { f, h, det: det_sign_logabs(&jac.dg_dz) })
    }

    fn rhs(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.f.len() + self.h.len());
        out.rows_mut(0, self.f.len()).copy_from(&self.f);
        out.rows_mut(self.f.len(), self.h.len()).copy_from(&self.h);
        out
    }
}

fn split(system: &PowerSystem, y: &DVector<f64>) -> SystemState {
    SystemState::new(y.rows(0, system.n()).into_owned(), y.rows(system.n(), system.m()).into_owned())
}

fn join(state: &SystemState) -> DVector<f64> {
    let mut y = DVector::zeros(state.x.len() + state.z.len());
    y.rows_mut(0, state.x.len()).copy_from(&state.x);
    y.rows_mut(state.x.len(), state.z.len()).copy_from(&state.z);
    y
}

/// Integrates with the integrator named in `config` from the default registry.
pub fn integrate(
    system: &PowerSystem,
    initial: &SystemState,
    config: &IntegratorConfig,
    domain: &DomainBox,
) -> Result<Trajectory> {
    let registry = IntegratorRegistry::default();
    integrate_with(registry.get(&config.method)?, system, initial, config, domain)
}

/// Adaptive integration of the (n+m)-dimensional embedded ODE. z is re-projected onto g = 0
/// (x held fixed) when the residual drifts above `g_drift_tol` and every
/// `reprojection_interval` accepted steps. The initial z is projected first.
pub fn integrate_with(
    method: &dyn Integrator,
    system: &PowerSystem,
    initial: &SystemState,
    config: &IntegratorConfig,
    domain: &DomainBox,
) -> Result<Trajectory> {
    config.validate()?;
    domain.validate(system)?;
    if initial.x.len() != system.n() || initial.z.len() != system.m() {
        return Err(Error::Dimension("initial state does not match the system".into()));
    }
    let popts = ProjectionOptions { g_tol: config.g_tol, max_iter: 50 };
    let (z0, _) = project_algebraic(system, &system.x2(&initial.x), &initial.z, popts)?;
    let mut state = SystemState::new(initial.x.clone(), z0);
    if !domain.contains(&state) {
        return Err(Error::InvalidParameter {
            kind: "initial state".into(),
            name: "domain".into(),
            reason: "initial state lies outside the domain box".into(),
        });
    }

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        zdot_norm: Vec::new(),
        f_norm: Vec::new(),
        det_sign: Vec::new(),
        det_logabs: Vec::new(),
        v_value: None,
        termination: Termination::ReachedTEnd,
        stats: IntegrationStats::default(),
    };
    let record = |traj: &mut Trajectory, t: f64, s: &SystemState, smp: &Sample| {
        traj.times.push(t);
        traj.states.push(s.clone());
        traj.zdot_norm.push(smp.h.norm());
        traj.f_norm.push(smp.f.norm());
        traj.det_sign.push(smp.det.0);
        traj.det_logabs.push(smp.det.1);
    };

    let mut sample = match Sample::evaluate(system, &state) {
        Ok(s) => s,
        Err(Error::SingularAlgebraicJacobian { .. }) => {
            return Err(Error::InvalidParameter {
                kind: "initial state".into(),
                name: "z".into(),
                reason: "initial state lies on the impasse surface".into(),
            })
        }
        Err(e) => return Err(e),
    };
    let mut t = 0.0;
    record(&mut traj, t, &state, &sample);
    let mut last_out = t;

    let mut y = join(&state);
    let mut h = config.initial_step.min(config.max_step);
    let mut since_proj = 0;
    let q = method.error_order() as f64 + 1.0;
    let mut rhs = |yy: &DVector<f64>| -> Result<DVector<f64>> {
        let s = split(system, yy);
        let (f, hz) = system.embedded_rhs(&s)?;
        let mut out = DVector::zeros(yy.len());
        out.rows_mut(0, f.len()).copy_from(&f);
        out.rows_mut(f.len(), hz.len()).copy_from(&hz);
        Ok(out)
    };

    while t < config.t_end {
        let last = t + h >= config.t_end;
        let hh = if last { config.t_end - t } else { h };
        let k1 = sample.rhs();
        let step = match method.step(&mut rhs, &y, &k1, hh) {
            Ok(s) => s,
            Err(Error::SingularAlgebraicJacobian { .. }) => {
                // stages hit the impasse surface; retry smaller before giving up
                if hh > 1e-10 {
                    h = hh * 0.25;
                    traj.stats.rejected += 1;
                    continue;
                }
                traj.termination = Termination::Impasse;
                break;
            }
            Err(e) => return Err(e),
        };
        if step.y.iter().any(|v| !v.is_finite()) {
            if hh > 1e-10 {
                h = hh * 0.25;
                traj.stats.rejected += 1;
                continue;
            }
            traj.termination = Termination::Diverged;
            break;
        }
        let mut acc = 0.0;
        for i in 0..y.len() {
            let sc = config.abs_tol + config.rel_tol * y[i].abs().max(step.y[i].abs());
            acc += (step.err[i] / sc).powi(2);
        }
        let err = (acc / y.len() as f64).sqrt();
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / q)).clamp(0.2, 5.0) };
        if err > 1.0 {
            traj.stats.rejected += 1;
            h = hh * factor;
            if h < 1e-12 {
                traj.termination = Termination::Diverged;
                break;
            }
            continue;
        }
        traj.stats.accepted += 1;
        t = if last { config.t_end } else { t + hh };
        state = split(system, &step.y);
        since_proj += 1;
        let drift = max_abs(&system.eval_g(&state));
        if !drift.is_finite() {
            traj.termination = Termination::Diverged;
            break;
        }
        if drift > config.g_drift_tol || since_proj >= config.reprojection_interval {
            match project_algebraic(system, &system.x2(&state.x), &state.z, popts) {
                Ok((z, _)) => state.z = z,
                Err(Error::SingularAlgebraicJacobian { .. }) => {
                    traj.termination = Termination::Impasse;
                    break;
                }
                Err(_) => {
                    traj.termination = Termination::Diverged;
                    break;
                }
            }
            since_proj = 0;
            traj.stats.projections += 1;
        }
        sample = match Sample::evaluate(system, &state) {
            Ok(s) => s,
            Err(Error::SingularAlgebraicJacobian { .. }) => {
                traj.termination = Termination::Impasse;
                break;
            }
            Err(e) => return Err(e),
        };
        y = join(&state);
        let outside = !domain.contains(&state);
        if outside || t >= config.t_end || t - last_out >= config.output_interval {
            record(&mut traj, t, &state, &sample);
            last_out = t;
        }
        if outside {
            traj.termination = Termination::LeftDomain;
            break;
        }
        h = (hh * factor).min(config.max_step);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property1Report {
    pub holds: bool,
    pub window: f64,
    pub trailing_max_zdot: f64,
    /// Smallest distance of z to the domain faces over the whole run, when a box is given.
    pub z_margin: Option<f64>,
    pub termination: Termination,
}

/// Trailing-window test of "z bounded and ż → 0". `window` defaults to the final 20 %.
pub fn check_property1(
    traj: &Trajectory,
    zdot_threshold: f64,
    window: Option<f64>,
    domain: Option<&DomainBox>,
) -> Result<Property1Report> {
    let window = window.unwrap_or(0.2 * traj.span());
    let start = traj.window_start(window)?;
    let trailing_max_zdot = traj.zdot_norm[start..].iter().fold(0.0f64, |m, v| m.max(*v));
    let z_margin = domain.map(|d| {
        traj.states
            .iter()
            .map(|s| {
                s.z.iter()
                    .enumerate()
                    .map(|(i, v)| (v - d.z_lower[i]).min(d.z_upper[i] - v))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    });
    let holds = traj.termination == Termination::ReachedTEnd
        && trailing_max_zdot <= zdot_threshold
        && z_margin.is_none_or(|m| m >= 0.0);
    Ok(Property1Report { holds, window, trailing_max_zdot, z_margin, termination: traj.termination })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumProbe {
    pub window: Option<f64>,
    pub dist_tol: f64,
}

impl Default for EquilibriumProbe {
    fn default() -> Self {
        Self { window: None, dist_tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Property2Report {
    pub holds: bool,
    pub stage_a: bool,
    pub trailing_max_f: f64,
    pub stage_b: bool,
    pub distance: Option<f64>,
    pub nearest: Option<SystemState>,
    pub reason: Option<String>,
}

/// (a) trailing ‖f‖ ≤ `f_threshold`; (b) the final state lies within `dist_tol` of an
/// equilibrium found by minimum-norm Gauss–Newton seeded at the final state.
pub fn check_property2(
    traj: &Trajectory,
    system: &PowerSystem,
    f_threshold: f64,
    probe: EquilibriumProbe,
) -> Result<Property2Report> {
    let window = probe.window.unwrap_or(0.2 * traj.span());
    let start = traj.window_start(window)?;
    let trailing_max_f = traj.f_norm[start..].iter().fold(0.0f64, |m, v| m.max(*v));
    let stage_a = trailing_max_f <= f_threshold;
    let last = traj.last_state().ok_or_else(|| Error::Dimension("empty trajectory".into()))?;
    let (stage_b, distance, nearest, reason) = match nearest_equilibrium(system, last) {
        Ok(eq) => {
            let d = (join(&eq) - join(last)).norm();
            let ok = d <= probe.dist_tol;
            let why = (!ok).then(|| format!("nearest equilibrium is {d:.3e} away"));
            (ok, Some(d), Some(eq), why)
        }
        Err(e) => (false, None, None, Some(e.to_string())),
    };
    let reason = if stage_a { reason } else { Some(format!("trailing |f| = {trailing_max_f:.3e}")) };
    Ok(Property2Report { holds: stage_a && stage_b, stage_a, trailing_max_f, stage_b, distance, nearest, reason })
}
