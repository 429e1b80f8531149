//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Reciprocal condition threshold below which dg/dz counts as singular.
pub const RCOND_SINGULAR: f64 = 1e-10;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorization of a square matrix together with a 1-norm reciprocal condition estimate.
pub struct Factorized {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub rcond: f64,
}

impl Factorized {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let anorm = norm1(a);
        let lu = a.clone().lu();
        let rcond = match lu.try_inverse() {
            Some(inv) if anorm > 0.0 => {
                let r = 1.0 / (anorm * norm1(&inv));
                if r.is_finite() {
                    r
                } else {
                    0.0
                }
            }
            _ => 0.0,
        };
        if rcond < RCOND_SINGULAR {
            return Err(Error::SingularAlgebraicJacobian { rcond });
        }
        Ok(Self { lu, rcond })
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(b).expect("factorization checked non-singular")
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("factorization checked non-singular")
    }

    pub fn determinant(&self) -> f64 {
        self.lu.determinant()
    }
}

/// Sign and natural log of |det(a)| computed from an LU factorization.
pub fn det_sign_logabs(a: &DMatrix<f64>) -> (f64, f64) {
    let lu = a.clone().lu();
    let u = lu.u();
    let mut sign = if lu.p().determinant::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut logabs = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        if d < 0.0 {
            sign = -sign;
        }
        logabs += d.abs().ln();
    }
    (sign, logabs)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of the symmetric part of `m`, eigenvalues sorted ascending.
pub fn sym_eigh(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn sym_max_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.max()
}

pub fn sym_min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Induced 2-norm.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    a.clone().svd(false, false).singular_values
}

/// Left inverse (AᵀA)⁻¹Aᵀ of a full-column-rank matrix. `None` when AᵀA is singular.
pub fn left_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let ata = a.transpose() * a;
    ata.try_inverse().map(|inv| inv * a.transpose())
}

/// Solves QB + BᵀQ = −R for symmetric Q through the Kronecker form (small n only).
pub fn solve_lyapunov(b: &DMatrix<f64>, r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = b.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let bt = b.transpose();
    let op = eye.kronecker(&bt) + bt.kronecker(&eye);
    let rhs = DVector::from_column_slice((-r).as_slice());
    let sol = op.lu().solve(&rhs)?;
    let q = DMatrix::from_column_slice(n, n, sol.as_slice());
    Some(symmetrize(&q))
}

/// Projects onto {P = Pᵀ, P ⪰ eps·I} by clipping eigenvalues.
pub fn clip_eigenvalues(m: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let (w, u) = sym_eigh(m);
    let clipped = DMatrix::from_diagonal(&w.map(|v| v.max(eps)));
    symmetrize(&(&u * clipped * u.transpose()))
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
