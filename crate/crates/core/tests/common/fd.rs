use augsync::model::{PowerSystem, SystemState};
use augsync::simulate::{project_algebraic, ProjectionOptions};
use nalgebra::{DMatrix, DVector};

const H: f64 = 1e-6;

fn fd(cols: usize, rows: usize, mut eval: impl FnMut(usize, f64) -> DVector<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let d = (eval(j, H) - eval(j, -H)) / (2.0 * H);
        out.set_column(j, &d);
    }
    out
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(1e-3)
}

/// Largest relative error over the four blocks and the reduced Jacobian.
pub fn worst_block_error(sys: &PowerSystem, s: &SystemState) -> f64 {
    let (n, m) = (sys.n(), sys.m());
    let jac = sys.eval_jacobians(s);
    let dfdx = fd(n, n, |j, h| {
        let mut t = s.clone();
        t.x[j] += h;
        sys.eval_f(&t)
    });
    let dfdz = fd(m, n, |j, h| {
        let mut t = s.clone();
        t.z[j] += h;
        sys.eval_f(&t)
    });
    let x2 = sys.x2(&s.x);
    let dgdx2 = fd(sys.n2(), m, |j, h| {
        let mut y = x2.clone();
        y[j] += h;
        sys.eval_g_x2(&y, &s.z)
    });
    let dgdz = fd(m, m, |j, h| {
        let mut z = s.z.clone();
        z[j] += h;
        sys.eval_g_x2(&x2, &z)
    });
    // reduced Jacobian: derivative of f along the constraint manifold
    let opts = ProjectionOptions { g_tol: 1e-13, max_iter: 50 };
    let red = fd(n, n, |j, h| {
        let mut x = s.x.clone();
        x[j] += h;
        let (z, _) = project_algebraic(sys, &sys.x2(&x), &s.z, opts).unwrap();
        sys.eval_f(&SystemState::new(x, z))
    });
    let j_red = sys.reduced_jacobian_from(&jac).unwrap();
    [
        rel_err(&jac.df_dx, &dfdx),
        rel_err(&jac.df_dz, &dfdz),
        rel_err(&jac.dg_dx2, &dgdx2),
        rel_err(&jac.dg_dz, &dgdz),
        rel_err(&j_red, &red),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}
