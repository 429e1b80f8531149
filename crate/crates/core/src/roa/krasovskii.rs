//! Krasovskii V-function 𝒱 = fᵀPf and synthesis of P from sampled Jacobians.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EtaSelector, KappaFn, VFunction};
use crate::error::{Error, Result};
use crate::linalg::{clip_eigenvalues, left_inverse, solve_lyapunov, sym_eigh, sym_max_eig, sym_min_eig, symmetrize};
use crate::model::device::ClassicalSgPi;
use crate::model::{PowerSystem, SystemState};

pub fn krasovskii_value(system: &PowerSystem, p: &DMatrix<f64>, s: &SystemState) -> f64 {
    let f = system.eval_f(s);
    (f.transpose() * p * &f)[(0, 0)]
}

/// Aᵀ(PJ + JᵀP)A at `s`.
pub fn krasovskii_vdot_matrix(
    system: &PowerSystem,
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    s: &SystemState,
) -> Result<DMatrix<f64>> {
    let j = system.eval_reduced_jacobian(s)?;
    Ok(lmi_matrix(p, a, &j))
}

fn lmi_matrix(p: &DMatrix<f64>, a: &DMatrix<f64>, j: &DMatrix<f64>) -> DMatrix<f64> {
    let pj = p * j;
    symmetrize(&(a.transpose() * (&pj + pj.transpose()) * a))
}

/// f = Aξ for systems whose PI integrators satisfy ζ̇ = −k₂δ̇: ξ drops every ζ and the ζ row
/// of A carries −k₂ in the column of the same device's δ.
pub fn integrator_relaxation(system: &PowerSystem) -> DMatrix<f64> {
    let n = system.n();
    let mut drop = Vec::new();
    let mut rows = Vec::new();
    for d in system.devices() {
        if d.device.kind() != ClassicalSgPi::KIND {
            continue;
        }
        let k2 = d.device.params().iter().find(|(k, _)| *k == "k2").map(|(_, v)| *v).unwrap_or(0.0);
        let zeta = d.x_offset;
        let delta = d.x_offset + 2;
        drop.push(zeta);
        rows.push((zeta, delta, k2));
    }
    let keep: Vec<usize> = (0..n).filter(|i| !drop.contains(i)).collect();
    let mut a = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        a[(i, c)] = 1.0;
    }
    for (zeta, delta, k2) in rows {
        let c = keep.iter().position(|&i| i == delta).expect("delta is kept");
        a[(zeta, c)] = -k2;
    }
    a
}

/// Type-I V-function.
#[derive(Debug, Clone)]
pub struct KrasovskiiV {
    pub p: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub eta: EtaSelector,
}

impl KrasovskiiV {
    pub fn new(p: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n || a.nrows() != n || a.ncols() == 0 || a.ncols() > n {
            return Err(Error::Dimension(format!(
                "P is {}x{}, A is {}x{}",
                p.nrows(),
                p.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        let asym = (&p - p.transpose()).amax();
        if asym > 1e-9 * p.amax().max(1.0) {
            return Err(Error::InvalidParameter {
                kind: "krasovskii".into(),
                name: "P".into(),
                reason: format!("not symmetric (max asymmetry {asym:.3e})"),
            });
        }
        let p = symmetrize(&p);
        let lmin = sym_min_eig(&p);
        if !(lmin > 0.0) {
            return Err(Error::InvalidParameter {
                kind: "krasovskii".into(),
                name: "P".into(),
                reason: format!("not positive definite (lambda_min {lmin:.3e})"),
            });
        }
        if left_inverse(&a).is_none() {
            return Err(Error::InvalidParameter {
                kind: "krasovskii".into(),
                name: "A".into(),
                reason: "A must have full column rank".into(),
            });
        }
        Ok(Self { p, a, eta: EtaSelector::EtaIsF2 })
    }

    /// α(s) = λ_min(P)s², the lower envelope in ‖f₂‖.
    pub fn alpha(&self) -> KappaFn {
        KappaFn { c: sym_min_eig(&self.p), p: 2.0 }
    }

    /// β(s) = λ_max(P)s², the upper envelope in ‖f‖.
    pub fn beta(&self) -> KappaFn {
        KappaFn { c: sym_max_eig(&self.p), p: 2.0 }
    }

    pub fn vdot_matrix(&self, system: &PowerSystem, s: &SystemState) -> Result<DMatrix<f64>> {
        krasovskii_vdot_matrix(system, &self.p, &self.a, s)
    }

    /// ‖f − Aξ‖ with ξ the least-squares coordinates of f.
    pub fn relaxation_residual(&self, system: &PowerSystem, s: &SystemState) -> f64 {
        let f = system.eval_f(s);
        let pinv = left_inverse(&self.a).expect("checked in new");
        let xi = pinv * &f;
        (f - &self.a * xi).amax()
    }
}

impl VFunction for KrasovskiiV {
    fn describe(&self) -> String {
        format!("type I: f^T P f, n = {}, relaxed dimension {}", self.p.nrows(), self.a.ncols())
    }

    fn value(&self, system: &PowerSystem, s: &SystemState) -> f64 {
        krasovskii_value(system, &self.p, s)
    }

    fn vdot(&self, system: &PowerSystem, s: &SystemState) -> Result<f64> {
        let f = system.eval_f(s);
        let j = system.eval_reduced_jacobian(s)?;
        let pj = &self.p * j;
        Ok((f.transpose() * (&pj + pj.transpose()) * &f)[(0, 0)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Plain subgradient steps along the top eigenvector outer product of the worst sample.
    Subgradient,
    /// Descent on a log-sum-exp smoothing of the same objective, whose gradient is a
    /// weighted sum of eigenvector outer products that tends to the subgradient as the
    /// smoothing width shrinks.
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub method: FitMethod,
    /// Lower bound on λ_min(P) after scaling to trace n.
    pub epsilon: f64,
    /// Accept once the worst λ_max is below −delta.
    pub delta: f64,
    pub max_iter: usize,
    pub step0: f64,
    /// Shift used for the Lyapunov warm start.
    pub warm_alpha: f64,
    /// Eigenvalue floor in preconditioned coordinates (subgradient method).
    pub clip: f64,
    pub check_every: usize,
    /// Iterations between preconditioner restarts (subgradient method).
    pub epoch: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            method: FitMethod::Smoothed,
            epsilon: 1e-6,
            delta: 1e-3,
            max_iter: 20000,
            step0: 0.5,
            warm_alpha: 0.05,
            clip: 1e-3,
            check_every: 20,
            epoch: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub p: DMatrix<f64>,
    /// max over samples of λ_max(Aᵀ(PJ + JᵀP)A), with P scaled to trace n.
    pub objective: f64,
    pub iterations: usize,
}

/// Orthonormal basis of the complement of range(A).
pub fn complement(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = a.shape();
    if k == n {
        return DMatrix::zeros(n, 0);
    }
    let proj = a * left_inverse(a).expect("full column rank");
    let resid = DMatrix::<f64>::identity(n, n) - proj;
    let (w, v) = sym_eigh(&resid);
    let cols: Vec<usize> = (0..n).filter(|&i| w[i] > 0.5).collect();
    DMatrix::from_fn(n, cols.len(), |r, c| v[(r, cols[c])])
}

fn worst(mats: &[DMatrix<f64>]) -> (f64, usize) {
    mats.par_iter()
        .enumerate()
        .map(|(k, m)| (sym_max_eig(m), k))
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
}

/// Lifts Q = AᵀPA back to an n×n P, scales to trace n and floors the spectrum at ε. The
/// complement of range(A) does not enter the objective, so it only receives the floor.
fn lift(q: &DMatrix<f64>, a_pinv: &DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    let n = a_pinv.ncols();
    let mut p = symmetrize(&(a_pinv.transpose() * q * a_pinv));
    p *= n as f64 / p.trace();
    clip_eigenvalues(&p, epsilon)
}

/// Objective of a full P over the given reduced Jacobians.
pub fn lmi_objective(p: &DMatrix<f64>, a: &DMatrix<f64>, jacobians: &[DMatrix<f64>]) -> f64 {
    jacobians.par_iter().map(|j| sym_max_eig(&lmi_matrix(p, a, j))).reduce(|| f64::NEG_INFINITY, f64::max)
}

/// Shared data of one fit: B_k = A⁺J_kA, the trace weight G = A⁺A⁺ᵀ (tr P = tr(QG)) and
/// the full problem for scoring candidates.
struct Problem<'a> {
    jacobians: &'a [DMatrix<f64>],
    a: &'a DMatrix<f64>,
    a_pinv: DMatrix<f64>,
    bs: Vec<DMatrix<f64>>,
    g: DMatrix<f64>,
    n: f64,
    opts: FitOptions,
}

impl Problem<'_> {
    fn score(&self, q: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let p = lift(q, &self.a_pinv, self.opts.epsilon);
        (lmi_objective(&p, self.a, self.jacobians), p)
    }

    fn normalize(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        q * (self.n / (q * &self.g).trace())
    }
}

/// Smoothed max over all samples and eigenvalues, for Q scaled to tr(QG) = n, with its
/// gradient.
fn smoothed_value(pr: &Problem, q: &DMatrix<f64>, mu: f64) -> (f64, f64, DMatrix<f64>) {
    let k = q.nrows();
    let eigs: Vec<(DVector<f64>, DMatrix<f64>)> =
        pr.bs.par_iter().map(|b| sym_eigh(&(q * b + b.transpose() * q))).collect();
    let top = eigs.iter().map(|(w, _)| w[k - 1]).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut grad = DMatrix::zeros(k, k);
    for ((w, v), b) in eigs.iter().zip(&pr.bs) {
        for i in 0..k {
            let e = ((w[i] - top) / mu).exp();
            if e < 1e-300 {
                continue;
            }
            total += e;
            let u = v.column(i);
            let bu = b * u;
            grad += (&bu * u.transpose() + u * bu.transpose()) * e;
        }
    }
    grad /= total;
    let value = top + mu * total.ln();
    // derivative of the degree-zero ratio n·f(Q)/tr(QG) at tr(QG) = n
    let grad = symmetrize(&(grad - &pr.g * (value / pr.n)));
    (value, top, grad)
}

fn fit_smoothed(pr: &Problem, q0: DMatrix<f64>) -> (f64, DMatrix<f64>, usize) {
    let opts = pr.opts;
    let k = q0.nrows();
    let mut q = pr.normalize(&q0);
    let (mut best, mut best_p) = pr.score(&q);
    let mut step = opts.step0.min(0.5);
    let mut it = 0;
    while it < opts.max_iter && best >= -opts.delta {
        let (_, top, _) = smoothed_value(pr, &q, 1.0);
        let mu = (0.05 * top.abs()).max(1e-9);
        let (val, _, grad) = smoothed_value(pr, &q, mu);
        // affine-invariant direction −Q ∇ Q, measured in the metric at Q
        let dir = -(&q * &grad * &q);
        let chol = match q.clone().cholesky() {
            Some(c) => c,
            None => break,
        };
        let l_inv = chol.l().try_inverse().unwrap_or_else(|| DMatrix::identity(k, k));
        let size = (&l_inv * &dir * l_inv.transpose()).norm();
        if size == 0.0 {
            break;
        }
        let mut accepted = false;
        while step > 1e-10 {
            let trial = symmetrize(&(&q + &dir * (step / size)));
            if sym_min_eig(&trial) > 0.0 {
                let trial = pr.normalize(&trial);
                let (tv, _, _) = smoothed_value(pr, &trial, mu);
                if tv < val {
                    q = trial;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        it += 1;
        if !accepted {
            step = opts.step0.min(0.5);
            continue;
        }
        step = (step * 1.5).min(0.5);
        if it % opts.check_every.max(1) == 0 || it == opts.max_iter {
            let (obj, p) = pr.score(&q);
            if obj < best {
                best = obj;
                best_p = p;
            }
        }
    }
    (best, best_p, it)
}

fn fit_subgradient(pr: &Problem, q0: DMatrix<f64>) -> (f64, DMatrix<f64>, usize) {
    let opts = pr.opts;
    let k = q0.nrows();
    let eye = DMatrix::<f64>::identity(k, k);
    let mut best_q = q0;
    let (mut best, mut best_p) = pr.score(&best_q);
    let mut it = 0;
    // Each epoch works in coordinates Q = LWLᵀ centred at the best Q so far (W = I) and
    // restarts the step schedule.
    while it < opts.max_iter && best >= -opts.delta {
        let l = best_q.clone().cholesky().map(|c| c.l()).unwrap_or_else(|| eye.clone());
        let l_inv_t = l.clone().try_inverse().unwrap_or_else(|| eye.clone()).transpose();
        let cs: Vec<DMatrix<f64>> = pr.bs.iter().map(|b| l.transpose() * b * &l_inv_t).collect();
        let mut w = eye.clone();
        for e in 0..opts.epoch.max(1) {
            if it >= opts.max_iter {
                break;
            }
            let mats: Vec<DMatrix<f64>> = cs.iter().map(|c| symmetrize(&(&w * c + c.transpose() * &w))).collect();
            let (_, kmax) = worst(&mats);
            let (_, vecs) = sym_eigh(&mats[kmax]);
            let u = vecs.column(k - 1).into_owned();
            let cu = &cs[kmax] * &u;
            let g = &cu * u.transpose() + &u * cu.transpose();
            let gn = g.norm();
            if gn == 0.0 {
                break;
            }
            w -= g * (opts.step0 / ((e + 1) as f64).sqrt() / gn);
            w = clip_eigenvalues(&w, opts.clip);
            w *= k as f64 / w.trace();
            it += 1;
            if it % opts.check_every.max(1) == 0 || it == opts.max_iter {
                let q = &l * &w * l.transpose();
                let (obj, p) = pr.score(&q);
                if obj < best {
                    best = obj;
                    best_p = p;
                    best_q = q;
                }
                if best < -opts.delta {
                    break;
                }
            }
        }
    }
    (best, best_p, it)
}

/// Minimizes max_k λ_max(Aᵀ(PJ_k + J_kᵀP)A) over P ⪰ εI with trace(P) = n.
///
/// Only Q = AᵀPA enters the objective when P = A⁺ᵀQA⁺ plus a term on range(A)^⊥, and then
/// the inequality reads QB_k + B_kᵀQ ≺ 0 with B_k = A⁺J_kA. The search runs over Q from a
/// Lyapunov warm start for the mean B_k.
pub fn fit_p_from_jacobians(jacobians: &[DMatrix<f64>], a: &DMatrix<f64>, opts: FitOptions) -> Result<FitResult> {
    if jacobians.is_empty() {
        return Err(Error::Dimension("no samples to fit".into()));
    }
    let a_pinv = left_inverse(a)
        .ok_or_else(|| Error::InvalidParameter { kind: "fit".into(), name: "A".into(), reason: "rank deficient".into() })?;
    let k = a.ncols();
    let bs: Vec<DMatrix<f64>> = jacobians.iter().map(|j| &a_pinv * j * a).collect();
    let mut b_mean = DMatrix::zeros(k, k);
    for b in &bs {
        b_mean += b;
    }
    b_mean /= bs.len() as f64;
    let eye = DMatrix::<f64>::identity(k, k);
    let q0 = [opts.warm_alpha, 0.0]
        .iter()
        .filter_map(|alpha| solve_lyapunov(&(&b_mean + &eye * *alpha), &eye))
        .find(|q| sym_min_eig(q) > 0.0)
        .unwrap_or_else(|| eye.clone());
    let g = &a_pinv * a_pinv.transpose();
    let pr = Problem { jacobians, a, a_pinv, bs, g, n: a.nrows() as f64, opts };
    let (best, best_p, it) = match opts.method {
        FitMethod::Smoothed => fit_smoothed(&pr, q0),
        FitMethod::Subgradient => fit_subgradient(&pr, q0),
    };
    if best < -opts.delta {
        Ok(FitResult { p: best_p, objective: best, iterations: it })
    } else {
        Err(Error::Infeasible { iterations: it, best })
    }
}

/// Fits P on the reduced Jacobians at `samples`.
pub fn fit_p(system: &PowerSystem, samples: &[SystemState], a: &DMatrix<f64>, opts: FitOptions) -> Result<FitResult> {
    let jacobians: Vec<DMatrix<f64>> = samples
        .par_iter()
        .map(|s| system.eval_reduced_jacobian(s))
        .collect::<Result<Vec<_>>>()?;
    fit_p_from_jacobians(&jacobians, a, opts)
}
