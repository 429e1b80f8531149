//! Buses, branches, the bus admittance matrix and the network power-flow expressions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Device,
    Load,
    Passive,
    /// Stiff voltage source: (θ, V) are constants and do not enter z.
    Infinite { theta: f64, v: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
}

/// A π-model line. `g` and `b` are the series admittance, `b_shunt` the total line charging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub g: f64,
    pub b: f64,
    pub b_shunt: f64,
}

impl Branch {
    pub fn from_impedance(from: usize, to: usize, r: f64, x: f64, b_shunt: f64) -> Self {
        let d = r * r + x * x;
        Branch {
            from,
            to,
            g: r / d,
            b: -x / d,
            b_shunt,
        }
    }

    pub fn lossless(from: usize, to: usize, x: f64) -> Self {
        Self::from_impedance(from, to, 0.0, x, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceMatrix {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl AdmittanceMatrix {
    pub fn n_bus(&self) -> usize {
        self.g.nrows()
    }

    /// Adds a shunt element (per-unit conductance and susceptance) at `bus`.
    pub fn add_shunt(&mut self, bus: usize, g: f64, b: f64) -> Result<()> {
        if bus == 0 || bus > self.n_bus() {
            return Err(Error::Structural(format!("shunt on unknown bus {bus}")));
        }
        self.g[(bus - 1, bus - 1)] += g;
        self.b[(bus - 1, bus - 1)] += b;
        Ok(())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (&self.g - self.g.transpose()).amax() <= tol && (&self.b - self.b.transpose()).amax() <= tol
    }
}

/// Assembles G + jB from the branch list. Parallel branches simply accumulate.
pub fn build_admittance(branches: &[Branch], n_bus: usize) -> Result<AdmittanceMatrix> {
    let mut g = DMatrix::zeros(n_bus, n_bus);
    let mut b = DMatrix::zeros(n_bus, n_bus);
    for br in branches {
        if br.from == 0 || br.from > n_bus || br.to == 0 || br.to > n_bus {
            return Err(Error::Structural(format!(
                "branch {}-{} references a bus outside 1..={n_bus}",
                br.from, br.to
            )));
        }
        if br.from == br.to {
            return Err(Error::Structural(format!("branch {}-{} is a self loop", br.from, br.to)));
        }
        let (i, j) = (br.from - 1, br.to - 1);
        g[(i, i)] += br.g;
        g[(j, j)] += br.g;
        g[(i, j)] -= br.g;
        g[(j, i)] -= br.g;
        b[(i, i)] += br.b + br.b_shunt / 2.0;
        b[(j, j)] += br.b + br.b_shunt / 2.0;
        b[(i, j)] -= br.b;
        b[(j, i)] -= br.b;
    }
    Ok(AdmittanceMatrix { g, b })
}

/// Network topology plus the mapping between buses and the algebraic vector z.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub admittance: AdmittanceMatrix,
    /// bus index (0-based) → position k of the bus block (θ at 2k, V at 2k+1) in z.
    z_slot: Vec<Option<usize>>,
}

impl Network {
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>, admittance: AdmittanceMatrix) -> Result<Self> {
        for (k, bus) in buses.iter().enumerate() {
            if bus.id != k + 1 {
                return Err(Error::Structural(format!(
                    "bus ids must be contiguous from 1; found {} at position {}",
                    bus.id,
                    k + 1
                )));
            }
        }
        if admittance.n_bus() != buses.len() {
            return Err(Error::Dimension(format!(
                "admittance is {}x{} but there are {} buses",
                admittance.n_bus(),
                admittance.n_bus(),
                buses.len()
            )));
        }
        let mut next = 0;
        let z_slot = buses
            .iter()
            .map(|b| match b.kind {
                BusKind::Infinite { .. } => None,
                _ => {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect();
        Ok(Network {
            buses,
            branches,
            admittance,
            z_slot,
        })
    }

    pub fn from_branches(buses: Vec<Bus>, branches: Vec<Branch>) -> Result<Self> {
        let y = build_admittance(&branches, buses.len())?;
        Self::new(buses, branches, y)
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Dimension m of z.
    pub fn m(&self) -> usize {
        2 * self.z_slot.iter().filter(|s| s.is_some()).count()
    }

    /// Slot of bus `id` (1-based) inside z, if it is not a fixed-voltage bus.
    pub fn slot(&self, id: usize) -> Option<usize> {
        self.z_slot.get(id.wrapping_sub(1)).copied().flatten()
    }

    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_bus()).filter(move |&j| {
            j != idx && (self.admittance.g[(idx, j)] != 0.0 || self.admittance.b[(idx, j)] != 0.0)
        })
    }

    /// Voltage angle and magnitude of every bus (fixed buses filled from their kind).
    pub fn voltages(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut th = vec![0.0; self.n_bus()];
        let mut v = vec![0.0; self.n_bus()];
        for (i, bus) in self.buses.iter().enumerate() {
            match (bus.kind, self.z_slot[i]) {
                (BusKind::Infinite { theta, v: vm }, _) => {
                    th[i] = theta;
                    v[i] = vm;
                }
                (_, Some(k)) => {
                    th[i] = z[2 * k];
                    v[i] = z[2 * k + 1];
                }
                _ => unreachable!("non-infinite bus without z slot"),
            }
        }
        (th, v)
    }

    /// Net power leaving each bus into the network, (P_i, Q_i), for all buses.
    pub fn flows(&self, z: &[f64]) -> Vec<(f64, f64)> {
        let (th, v) = self.voltages(z);
        let (gm, bm) = (&self.admittance.g, &self.admittance.b);
        (0..self.n_bus())
            .map(|i| {
                let mut p = gm[(i, i)] * v[i] * v[i];
                let mut q = -bm[(i, i)] * v[i] * v[i];
                for j in self.neighbors(i) {
                    let (s, c) = (th[i] - th[j]).sin_cos();
                    let vv = v[i] * v[j];
                    p += vv * (gm[(i, j)] * c + bm[(i, j)] * s);
                    q += vv * (gm[(i, j)] * s - bm[(i, j)] * c);
                }
                (p, q)
            })
            .collect()
    }

    /// Jacobian of the stacked flows (P, Q per z-bus, interleaved like z) with respect to z.
    pub fn flow_jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        let m = self.m();
        let (th, v) = self.voltages(z);
        let (gm, bm) = (&self.admittance.g, &self.admittance.b);
        let mut jac = DMatrix::zeros(m, m);
        for i in 0..self.n_bus() {
            let Some(ki) = self.z_slot[i] else { continue };
            let (rp, rq) = (2 * ki, 2 * ki + 1);
            let mut dp_dvi = 2.0 * gm[(i, i)] * v[i];
            let mut dq_dvi = -2.0 * bm[(i, i)] * v[i];
            let mut dp_dti = 0.0;
            let mut dq_dti = 0.0;
            for j in self.neighbors(i) {
                let (s, c) = (th[i] - th[j]).sin_cos();
                let (g, b) = (gm[(i, j)], bm[(i, j)]);
                let vv = v[i] * v[j];
                dp_dti += vv * (-g * s + b * c);
                dq_dti += vv * (g * c + b * s);
                dp_dvi += v[j] * (g * c + b * s);
                dq_dvi += v[j] * (g * s - b * c);
                if let Some(kj) = self.z_slot[j] {
                    let (ct, cv) = (2 * kj, 2 * kj + 1);
                    jac[(rp, ct)] += vv * (g * s - b * c);
                    jac[(rq, ct)] += -vv * (g * c + b * s);
                    jac[(rp, cv)] += v[i] * (g * c + b * s);
                    jac[(rq, cv)] += v[i] * (g * s - b * c);
                }
            }
            let (ct, cv) = (2 * ki, 2 * ki + 1);
            jac[(rp, ct)] += dp_dti;
            jac[(rq, ct)] += dq_dti;
            jac[(rp, cv)] += dp_dvi;
            jac[(rq, cv)] += dq_dvi;
        }
        jac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_lossless_line() {
        let y = build_admittance(&[Branch::lossless(1, 2, 0.5)], 2).unwrap();
        assert_eq!(y.b, DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 2.0, -2.0]));
        assert_eq!(y.g, DMatrix::zeros(2, 2));
    }

    #[test]
    fn empty_network() {
        let y = build_admittance(&[], 1).unwrap();
        assert_eq!(y.g, DMatrix::zeros(1, 1));
        assert_eq!(y.b, DMatrix::zeros(1, 1));
    }

    #[test]
    fn parallel_branches_are_summed() {
        let one = build_admittance(&[Branch::lossless(1, 2, 0.5)], 2).unwrap();
        let two = build_admittance(&[Branch::lossless(1, 2, 1.0), Branch::lossless(1, 2, 1.0)], 2).unwrap();
        assert!((&one.b - &two.b).amax() < 1e-15);
    }

    #[test]
    fn invalid_bus_ids_are_rejected() {
        assert!(matches!(
            build_admittance(&[Branch::lossless(1, 3, 0.5)], 2),
            Err(Error::Structural(_))
        ));
        assert!(matches!(
            build_admittance(&[Branch::lossless(2, 2, 0.5)], 2),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn zero_voltage_gives_zero_flow() {
        let buses = (1..=3).map(|id| Bus { id, kind: BusKind::Passive }).collect();
        let net = Network::from_branches(
            buses,
            vec![Branch::lossless(1, 2, 0.2), Branch::lossless(2, 3, 0.3)],
        )
        .unwrap();
        let z = [0.3, 0.0, -0.1, 0.0, 0.7, 0.0];
        for (p, q) in net.flows(&z) {
            assert_eq!(p, 0.0);
            assert_eq!(q, 0.0);
        }
    }
}
