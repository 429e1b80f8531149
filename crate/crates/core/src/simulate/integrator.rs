//! Embedded explicit Runge–Kutta pairs, selectable by name.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// One attempted step: the propagated solution and the local error estimate.
pub struct Step {
    pub y: DVector<f64>,
    pub err: DVector<f64>,
}

pub trait Integrator: Send + Sync {
    fn name(&self) -> &str;
    /// Order of the lower-order solution of the pair, used by step-size control.
    fn error_order(&self) -> usize;
    /// Takes one step of size `h` from `y`. `k1` is the right-hand side at `y`.
    fn step(
        &self,
        rhs: &mut dyn FnMut(&DVector<f64>) -> Result<DVector<f64>>,
        y: &DVector<f64>,
        k1: &DVector<f64>,
        h: f64,
    ) -> Result<Step>;
}

/// Butcher tableau of an embedded pair for an autonomous system.
#[derive(Debug, Clone)]
pub struct EmbeddedRk {
    name: &'static str,
    a: Vec<Vec<f64>>,
    /// Weights of the propagated solution.
    b: Vec<f64>,
    /// b − b̂, weights of the error estimate.
    e: Vec<f64>,
    error_order: usize,
}

impl EmbeddedRk {
    pub fn dormand_prince() -> Self {
        let b = vec![35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        let bh = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        Self {
            name: "dopri5",
            a: vec![
                vec![],
                vec![1.0 / 5.0],
                vec![3.0 / 40.0, 9.0 / 40.0],
                vec![44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
                vec![19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
                vec![9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
                vec![35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
            ],
            e: b.iter().zip(bh).map(|(x, y)| x - y).collect(),
            b,
            error_order: 4,
        }
    }

    pub fn bogacki_shampine() -> Self {
        let b = vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0];
        let bh = [7.0 / 24.0, 1.0 / 4.0, 1.0 / 3.0, 1.0 / 8.0];
        Self {
            name: "bs23",
            a: vec![vec![], vec![0.5], vec![0.0, 0.75], vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0]],
            e: b.iter().zip(bh).map(|(x, y)| x - y).collect(),
            b,
            error_order: 2,
        }
    }
}

impl Integrator for EmbeddedRk {
    fn name(&self) -> &str {
        self.name
    }

    fn error_order(&self) -> usize {
        self.error_order
    }

    fn step(
        &self,
        rhs: &mut dyn FnMut(&DVector<f64>) -> Result<DVector<f64>>,
        y: &DVector<f64>,
        k1: &DVector<f64>,
        h: f64,
    ) -> Result<Step> {
        let mut ks: Vec<DVector<f64>> = Vec::with_capacity(self.b.len());
        ks.push(k1.clone());
        for row in self.a.iter().skip(1) {
            let mut yi = y.clone();
            for (aij, kj) in row.iter().zip(&ks) {
                if *aij != 0.0 {
                    yi.axpy(h * aij, kj, 1.0);
                }
            }
            ks.push(rhs(&yi)?);
        }
        let mut y_new = y.clone();
        let mut err = DVector::zeros(y.len());
        for ((bi, ei), k) in self.b.iter().zip(&self.e).zip(&ks) {
            if *bi != 0.0 {
                y_new.axpy(h * bi, k, 1.0);
            }
            if *ei != 0.0 {
                err.axpy(h * ei, k, 1.0);
            }
        }
        Ok(Step { y: y_new, err })
    }
}

/// Integrators by name. `dopri5` is the default.
pub struct IntegratorRegistry {
    entries: BTreeMap<String, Box<dyn Integrator>>,
}

impl Default for IntegratorRegistry {
    fn default() -> Self {
        let mut r = Self { entries: BTreeMap::new() };
        r.register(Box::new(EmbeddedRk::dormand_prince()));
        r.register(Box::new(EmbeddedRk::bogacki_shampine()));
        r
    }
}

impl IntegratorRegistry {
    pub fn register(&mut self, integrator: Box<dyn Integrator>) {
        self.entries.insert(integrator.name().to_string(), integrator);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Integrator> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::Structural(format!("unknown integrator `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
