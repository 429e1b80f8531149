//! Equilibria of the DAE (f = 0, g = 0), continuation along a state parameter, and the
//! projected vector field on a plane through an equilibrium.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, singular_values};
use crate::model::{PowerSystem, SystemState};
use crate::simulate::{project_algebraic, ProjectionOptions};

/// Fixes x[index] = value, replacing one redundant Newton row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pin {
    pub index: usize,
    pub value: f64,
}

impl Pin {
    /// Pins the first state called `name` (e.g. `zeta`).
    pub fn by_name(system: &PowerSystem, name: &str, value: f64) -> Result<Self> {
        let index = system
            .find_state(name)
            .ok_or_else(|| Error::Structural(format!("no state named `{name}` to pin")))?;
        Ok(Self { index, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// σ_min/σ_max of the Newton matrix below which the equilibrium counts as non-isolated.
    pub rank_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 50, rank_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumPoint {
    pub state: SystemState,
    pub f_residual: f64,
    pub g_residual: f64,
    /// Eigenvalues (re, im) of the reduced Jacobian, sorted by real part. Diagnostics only.
    pub spectrum: Vec<(f64, f64)>,
}

fn residual(system: &PowerSystem, s: &SystemState) -> DVector<f64> {
    let (n, m) = (system.n(), system.m());
    let mut r = DVector::zeros(n + m);
    r.rows_mut(0, n).copy_from(&system.eval_f(s));
    r.rows_mut(n, m).copy_from(&system.eval_g(s));
    r
}

/// Jacobian of col(f, g) with respect to col(x, z).
pub fn full_jacobian(system: &PowerSystem, s: &SystemState) -> DMatrix<f64> {
    let (n, m) = (system.n(), system.m());
    let jac = system.eval_jacobians(s);
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(&jac.df_dx);
    out.view_mut((0, n), (n, m)).copy_from(&jac.df_dz);
    out.view_mut((n, 0), (m, n)).copy_from(&system.dg_dx(&jac));
    out.view_mut((n, n), (m, m)).copy_from(&jac.dg_dz);
    out
}

fn apply_step(system: &PowerSystem, s: &SystemState, dy: &DVector<f64>, alpha: f64) -> SystemState {
    let n = system.n();
    SystemState::new(
        &s.x - dy.rows(0, n) * alpha,
        &s.z - dy.rows(n, system.m()) * alpha,
    )
}

fn spectrum(system: &PowerSystem, s: &SystemState) -> Vec<(f64, f64)> {
    match system.eval_reduced_jacobian(s) {
        Ok(j) => {
            let mut ev: Vec<(f64, f64)> = j.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
            ev.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            ev
        }
        Err(_) => Vec::new(),
    }
}

fn finish(system: &PowerSystem, state: SystemState) -> EquilibriumPoint {
    let f_residual = max_abs(&system.eval_f(&state));
    let g_residual = max_abs(&system.eval_g(&state));
    let spectrum = spectrum(system, &state);
    EquilibriumPoint { state, f_residual, g_residual, spectrum }
}

/// Damped Newton on col(f, g) = 0. With a pin, the row most involved in the left null
/// vector of the Newton matrix at the seed is replaced by x[pin] − value.
pub fn solve_equilibrium(
    system: &PowerSystem,
    seed: &SystemState,
    pin: Option<Pin>,
    opts: NewtonOptions,
) -> Result<EquilibriumPoint> {
    let j0 = full_jacobian(system, seed);
    let replaced = match pin {
        Some(p) => {
            if p.index >= system.n() {
                return Err(Error::Structural(format!("pin index {} out of range", p.index)));
            }
            let svd = j0.clone().svd(true, false);
            let u = svd.u.as_ref().expect("requested U");
            let k = svd.singular_values.imin();
            let w = u.column(k);
            Some((w.iamax(), p))
        }
        None => {
            let sv = singular_values(&j0);
            let (smin, smax) = (sv.min(), sv.max());
            if smin <= opts.rank_tol * smax.max(1.0) {
                return Err(Error::RankDeficientWithoutPin { sigma_min: smin });
            }
            None
        }
    };
    let system_residual = |s: &SystemState| {
        let mut r = residual(system, s);
        if let Some((row, p)) = replaced {
            r[row] = s.x[p.index] - p.value;
        }
        r
    };
    let mut s = seed.clone();
    if let Some((_, p)) = replaced {
        s.x[p.index] = p.value;
    }
    let mut r = system_residual(&s);
    let mut rn = max_abs(&r);
    for it in 0..opts.max_iter {
        if !rn.is_finite() {
            return Err(Error::NewtonDivergence { iterations: it, residual: rn });
        }
        if rn <= opts.tol {
            break;
        }
        let mut jac = full_jacobian(system, &s);
        if let Some((row, p)) = replaced {
            jac.row_mut(row).fill(0.0);
            jac[(row, p.index)] = 1.0;
        }
        let dy = match jac.lu().solve(&r) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => {
                if replaced.is_none() {
                    return Err(Error::RankDeficientWithoutPin { sigma_min: 0.0 });
                }
                return Err(Error::NewtonDivergence { iterations: it, residual: rn });
            }
        };
        let mut alpha = 1.0;
        loop {
            let trial = apply_step(system, &s, &dy, alpha);
            let rt = system_residual(&trial);
            let rtn = max_abs(&rt);
            if rtn.is_finite() && (rtn < rn || alpha < 1e-4) {
                s = trial;
                r = rt;
                rn = rtn;
                break;
            }
            alpha *= 0.5;
        }
    }
    if !(rn <= opts.tol.max(1e-9)) {
        return Err(Error::NewtonDivergence { iterations: opts.max_iter, residual: rn });
    }
    Ok(finish(system, s))
}

/// Minimum-norm Gauss–Newton from `seed` onto {f = 0, g = 0}. On a continuum this lands
/// close to the orthogonal projection of the seed.
pub fn nearest_equilibrium(system: &PowerSystem, seed: &SystemState) -> Result<SystemState> {
    let mut s = seed.clone();
    let mut rn = f64::INFINITY;
    for it in 0..50 {
        let r = residual(system, &s);
        rn = max_abs(&r);
        if !rn.is_finite() {
            return Err(Error::NewtonDivergence { iterations: it, residual: rn });
        }
        if rn <= 1e-11 {
            return Ok(s);
        }
        let jac = full_jacobian(system, &s);
        let svd = jac.svd(true, true);
        let cut = 1e-10 * svd.singular_values.max();
        let dy = svd.solve(&r, cut).map_err(|_| Error::NewtonDivergence { iterations: it, residual: rn })?;
        s = apply_step(system, &s, &dy, 1.0);
    }
    if rn <= 1e-9 {
        Ok(s)
    } else {
        Err(Error::NewtonDivergence { iterations: 50, residual: rn })
    }
}

#[derive(Debug, Clone)]
pub struct ContinuumSample {
    pub parameter: f64,
    pub point: EquilibriumPoint,
    pub mean_theta: f64,
    pub mean_v: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuumTrace {
    pub parameter_index: usize,
    pub samples: Vec<ContinuumSample>,
}

impl ContinuumTrace {
    /// Values of x[index] along the trace.
    pub fn channel(&self, index: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.point.state.x[index]).collect()
    }
}

/// Grid lo, lo+step, …, hi (inclusive, rounded to the nearest whole number of steps).
pub fn parameter_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if hi < lo || (hi > lo && !(step > 0.0)) {
        return Err(Error::InvalidParameter {
            kind: "continuation".into(),
            name: "range".into(),
            reason: format!("bad range {lo}:{hi}:{step}"),
        });
    }
    if hi == lo {
        return Ok(vec![lo]);
    }
    let n = ((hi - lo) / step).round() as usize;
    Ok((0..=n).map(|k| if k == n { hi } else { lo + k as f64 * step }).collect())
}

fn bus_means(system: &PowerSystem, s: &SystemState) -> (f64, f64) {
    let (th, v) = system.network().voltages(s.z.as_slice());
    let n = th.len() as f64;
    (th.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n)
}

/// Natural-parameter continuation: re-solves with the parameter pinned at each grid value,
/// seeding with the neighbouring solution and walking outwards from `start`.
pub fn trace_continuum(
    system: &PowerSystem,
    start: &EquilibriumPoint,
    parameter: &str,
    values: &[f64],
) -> Result<ContinuumTrace> {
    let index = system
        .find_state(parameter)
        .ok_or_else(|| Error::Structural(format!("continuation parameter `{parameter}` is not a state")))?;
    let p0 = start.state.x[index];
    let mut out: Vec<Option<ContinuumSample>> = vec![None; values.len()];
    let pivot = values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - p0).abs().total_cmp(&(b.1 - p0).abs()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let solve_at = |seed: &SystemState, v: f64| -> Result<ContinuumSample> {
        let point = solve_equilibrium(system, seed, Some(Pin { index, value: v }), NewtonOptions::default())
            .map_err(|e| match e {
                Error::NewtonDivergence { iterations, residual } => {
                    Error::ContinuationDiverged { parameter: parameter.to_string(), value: v, iterations, residual }
                }
                other => other,
            })?;
        let (mean_theta, mean_v) = bus_means(system, &point.state);
        Ok(ContinuumSample { parameter: v, point, mean_theta, mean_v })
    };
    let mut seed = start.state.clone();
    for k in pivot..values.len() {
        let smp = solve_at(&seed, values[k])?;
        seed = smp.point.state.clone();
        out[k] = Some(smp);
    }
    if pivot > 0 {
        seed = out[pivot].as_ref().unwrap().point.state.clone();
        for k in (0..pivot).rev() {
            let smp = solve_at(&seed, values[k])?;
            seed = smp.point.state.clone();
            out[k] = Some(smp);
        }
    }
    Ok(ContinuumTrace { parameter_index: index, samples: out.into_iter().map(Option::unwrap).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSample {
    pub a: f64,
    pub b: f64,
    /// (f·s₁, f·s₂), or `None` when z could not be re-projected.
    pub value: Option<(f64, f64)>,
}

/// Projects f onto the plane spanned by orthonormal `s1`, `s2` at x* + a·s₁ + b·s₂.
pub fn tangent_plane_field(
    system: &PowerSystem,
    at: &EquilibriumPoint,
    s1: &DVector<f64>,
    s2: &DVector<f64>,
    a_values: &[f64],
    b_values: &[f64],
) -> Result<Vec<FieldSample>> {
    let n = system.n();
    if s1.len() != n || s2.len() != n {
        return Err(Error::Dimension(format!("plane directions must have length {n}")));
    }
    if (s1.norm() - 1.0).abs() > 1e-9 || (s2.norm() - 1.0).abs() > 1e-9 || s1.dot(s2).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            kind: "field".into(),
            name: "plane".into(),
            reason: "s1 and s2 must be orthonormal".into(),
        });
    }
    let mut out = Vec::with_capacity(a_values.len() * b_values.len());
    for &b in b_values {
        for &a in a_values {
            let x = &at.state.x + s1 * a + s2 * b;
            let value = project_algebraic(system, &system.x2(&x), &at.state.z, ProjectionOptions::default())
                .ok()
                .map(|(z, _)| {
                    let f = system.eval_f(&SystemState::new(x, z));
                    (f.dot(s1), f.dot(s2))
                });
            out.push(FieldSample { a, b, value });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = parameter_grid(-0.1, 0.1, 0.01).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], -0.1);
        assert_eq!(g[20], 0.1);
        assert_eq!(parameter_grid(0.0, 0.0, 0.01).unwrap(), vec![0.0]);
        assert!(parameter_grid(1.0, 0.0, 0.1).is_err());
    }
}
