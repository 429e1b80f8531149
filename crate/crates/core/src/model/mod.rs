//! Structure-preserving power-system DAE
//!
//! ```text
//! ẋ₁ = f₁(x₁, x₂, z)
//! ẋ₂ = f₂(x₁, x₂, z)
//!  0 = g(x₂, z)
//! ```
//!
//! with z = (θ₁, V₁, …, θₙ, Vₙ) interleaved per bus. Stiff (infinite) buses keep their
//! voltage fixed and have no slot in z.

pub mod device;
pub mod network;
pub mod registry;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Factorized;
pub use device::{Device, Terminal};
pub use network::{build_admittance, AdmittanceMatrix, Branch, Bus, BusKind, Network};
pub use registry::{DeviceRegistry, ParamSet};

/// A point (x, z). `x` is stored device by device in bus order, each device contributing
/// its x₁ block followed by its x₂ block; [`PowerSystem::x1`] and [`PowerSystem::x2`]
/// gather the two partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
}

impl SystemState {
    pub fn new(x: DVector<f64>, z: DVector<f64>) -> Self {
        Self { x, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.z.iter()).all(|v| v.is_finite())
    }
}

/// All partial derivatives needed by the embedded ODE and the reduced Jacobian.
#[derive(Debug, Clone)]
pub struct JacobianBundle {
    pub df_dx: DMatrix<f64>,
    pub df_dz: DMatrix<f64>,
    pub dg_dx2: DMatrix<f64>,
    pub dg_dz: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct AttachedDevice {
    pub bus: usize,
    pub device: Arc<dyn Device>,
    /// First index of this device in x.
    pub x_offset: usize,
    /// First index of this device's x₂ block in the gathered x₂ vector.
    pub x2_offset: usize,
}

impl AttachedDevice {
    pub fn x1_range(&self) -> std::ops::Range<usize> {
        self.x_offset..self.x_offset + self.device.n_x1()
    }

    pub fn x2_range(&self) -> std::ops::Range<usize> {
        let s = self.x_offset + self.device.n_x1();
        s..s + self.device.n_x2()
    }

    pub fn x_range(&self) -> std::ops::Range<usize> {
        self.x_offset..self.x_offset + self.device.n()
    }
}

#[derive(Debug, Clone)]
pub struct PowerSystem {
    network: Network,
    devices: Vec<AttachedDevice>,
    by_bus: Vec<Option<usize>>,
    x1_index: Vec<usize>,
    x2_index: Vec<usize>,
}

impl PowerSystem {
    /// Attaches devices to buses. At most one device per bus; devices cannot sit on a
    /// fixed-voltage bus. Bus kinds are refreshed from the attached devices.
    pub fn new(mut network: Network, mut devices: Vec<(usize, Arc<dyn Device>)>) -> Result<Self> {
        devices.sort_by_key(|(bus, _)| *bus);
        let n_bus = network.n_bus();
        let mut by_bus = vec![None; n_bus];
        let mut attached = Vec::with_capacity(devices.len());
        let (mut x_off, mut x2_off) = (0, 0);
        let (mut x1_index, mut x2_index) = (Vec::new(), Vec::new());
        for (bus, device) in devices {
            if bus == 0 || bus > n_bus {
                return Err(Error::Structural(format!("device attached to unknown bus {bus}")));
            }
            if by_bus[bus - 1].is_some() {
                return Err(Error::Structural(format!("more than one device on bus {bus}")));
            }
            if network.slot(bus).is_none() {
                return Err(Error::Structural(format!("device attached to fixed-voltage bus {bus}")));
            }
            let dev = AttachedDevice { bus, device, x_offset: x_off, x2_offset: x2_off };
            x1_index.extend(dev.x1_range());
            x2_index.extend(dev.x2_range());
            x_off += dev.device.n();
            x2_off += dev.device.n_x2();
            by_bus[bus - 1] = Some(attached.len());
            attached.push(dev);
        }
        for (i, bus) in network.buses.iter_mut().enumerate() {
            if matches!(bus.kind, BusKind::Infinite { .. }) {
                continue;
            }
            bus.kind = match by_bus[i] {
                Some(k) if attached[k].device.n() > 0 => BusKind::Device,
                Some(_) => BusKind::Load,
                None => BusKind::Passive,
            };
        }
        Ok(Self { network, devices: attached, by_bus, x1_index, x2_index })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn devices(&self) -> &[AttachedDevice] {
        &self.devices
    }

    pub fn device_at(&self, bus: usize) -> Option<&AttachedDevice> {
        self.by_bus.get(bus.wrapping_sub(1)).copied().flatten().map(|k| &self.devices[k])
    }

    pub fn n(&self) -> usize {
        self.x1_index.len() + self.x2_index.len()
    }

    pub fn n1(&self) -> usize {
        self.x1_index.len()
    }

    pub fn n2(&self) -> usize {
        self.x2_index.len()
    }

    pub fn m(&self) -> usize {
        self.network.m()
    }

    /// Positions in x of the x₁ entries, in gathered order.
    pub fn x1_index(&self) -> &[usize] {
        &self.x1_index
    }

    pub fn x2_index(&self) -> &[usize] {
        &self.x2_index
    }

    pub fn x1(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n1(), self.x1_index.iter().map(|&i| x[i]))
    }

    pub fn x2(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n2(), self.x2_index.iter().map(|&i| x[i]))
    }

    /// Writes a gathered x₂ vector back into x.
    pub fn set_x2(&self, x: &mut DVector<f64>, x2: &DVector<f64>) {
        for (k, &i) in self.x2_index.iter().enumerate() {
            x[i] = x2[k];
        }
    }

    /// Names of the x entries as `kind.bus.state`.
    pub fn state_names(&self) -> Vec<String> {
        self.devices
            .iter()
            .flat_map(|d| {
                d.device
                    .state_names()
                    .into_iter()
                    .map(move |s| format!("{}.{}.{}", d.device.kind(), d.bus, s))
            })
            .collect()
    }

    /// Index in x of the named state of the device at `bus`.
    pub fn state_index(&self, bus: usize, name: &str) -> Option<usize> {
        let d = self.device_at(bus)?;
        d.device.state_names().iter().position(|s| *s == name).map(|k| d.x_offset + k)
    }

    /// Looks a state up by its bare name (first match in bus order), e.g. `zeta`.
    pub fn find_state(&self, name: &str) -> Option<usize> {
        self.devices
            .iter()
            .find_map(|d| d.device.state_names().iter().position(|s| *s == name).map(|k| d.x_offset + k))
    }

    /// Ids of the buses holding a z slot, in z order.
    pub fn z_buses(&self) -> Vec<usize> {
        self.network.buses.iter().filter(|b| self.network.slot(b.id).is_some()).map(|b| b.id).collect()
    }

    pub fn flat_start(&self) -> SystemState {
        let mut x = DVector::zeros(self.n());
        for d in &self.devices {
            for (k, v) in d.device.default_state().into_iter().enumerate() {
                x[d.x_offset + k] = v;
            }
        }
        let mut z = DVector::zeros(self.m());
        for k in 0..self.m() / 2 {
            z[2 * k + 1] = 1.0;
        }
        SystemState { x, z }
    }

    fn terminal(&self, z: &[f64], bus: usize) -> Terminal {
        let k = self.network.slot(bus).expect("device buses hold a z slot");
        Terminal { theta: z[2 * k], v: z[2 * k + 1] }
    }

    fn check_dims(&self, state: &SystemState) {
        assert_eq!(state.x.len(), self.n(), "x has wrong length");
        assert_eq!(state.z.len(), self.m(), "z has wrong length");
    }

    /// g(x₂, z) with x₂ in gathered order.
    pub fn eval_g_x2(&self, x2: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x2.len(), self.n2(), "x2 has wrong length");
        assert_eq!(z.len(), self.m(), "z has wrong length");
        let zs = z.as_slice();
        let flows = self.network.flows(zs);
        let mut g = DVector::zeros(self.m());
        for (i, bus) in self.network.buses.iter().enumerate() {
            let Some(k) = self.network.slot(bus.id) else { continue };
            g[2 * k] = -flows[i].0;
            g[2 * k + 1] = -flows[i].1;
        }
        for d in &self.devices {
            let k = self.network.slot(d.bus).unwrap();
            let loc = &x2.as_slice()[d.x2_offset..d.x2_offset + d.device.n_x2()];
            let (p, q) = d.device.injection(loc, self.terminal(zs, d.bus));
            g[2 * k] += p;
            g[2 * k + 1] += q;
        }
        g
    }

    pub fn eval_g(&self, state: &SystemState) -> DVector<f64> {
        self.check_dims(state);
        self.eval_g_x2(&self.x2(&state.x), &state.z)
    }

    /// f(x, z) in x order.
    pub fn eval_f(&self, state: &SystemState) -> DVector<f64> {
        self.check_dims(state);
        let zs = state.z.as_slice();
        let mut f = DVector::zeros(self.n());
        for d in &self.devices {
            let r = d.x_range();
            let out = d.device.rhs(&state.x.as_slice()[r.clone()], self.terminal(zs, d.bus));
            for (k, v) in out.into_iter().enumerate() {
                f[r.start + k] = v;
            }
        }
        f
    }

    /// (f₁, f₂) in gathered order.
    pub fn eval_f_split(&self, state: &SystemState) -> (DVector<f64>, DVector<f64>) {
        let f = self.eval_f(state);
        (self.x1(&f), self.x2(&f))
    }

    pub fn eval_jacobians(&self, state: &SystemState) -> JacobianBundle {
        self.check_dims(state);
        let (n, n2, m) = (self.n(), self.n2(), self.m());
        let zs = state.z.as_slice();
        let x2 = self.x2(&state.x);
        let mut df_dx = DMatrix::zeros(n, n);
        let mut df_dz = DMatrix::zeros(n, m);
        let mut dg_dx2 = DMatrix::zeros(m, n2);
        let mut dg_dz = -self.network.flow_jacobian(zs);
        for d in &self.devices {
            let at = self.terminal(zs, d.bus);
            let k = self.network.slot(d.bus).unwrap();
            let r = d.x_range();
            let rj = d.device.rhs_jacobian(&state.x.as_slice()[r.clone()], at);
            df_dx.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&rj.df_dx);
            df_dz.view_mut((r.start, 2 * k), (r.len(), 2)).copy_from(&rj.df_dz);
            let n2i = d.device.n_x2();
            let ij = d.device.injection_jacobian(&x2.as_slice()[d.x2_offset..d.x2_offset + n2i], at);
            dg_dx2.view_mut((2 * k, d.x2_offset), (2, n2i)).copy_from(&ij.d_dx2);
            let mut blk = dg_dz.view_mut((2 * k, 2 * k), (2, 2));
            blk += &ij.d_dz;
        }
        JacobianBundle { df_dx, df_dz, dg_dx2, dg_dz }
    }

    /// ∂g/∂x with zero columns at the x₁ positions.
    pub fn dg_dx(&self, bundle: &JacobianBundle) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m(), self.n());
        for (k, &i) in self.x2_index.iter().enumerate() {
            out.set_column(i, &bundle.dg_dx2.column(k));
        }
        out
    }

    /// ż of the embedded ODE, h = −(∂g/∂z)⁻¹ ∂g/∂x₂ f₂.
    pub fn eval_h(&self, state: &SystemState) -> Result<DVector<f64>> {
        Ok(self.embedded_rhs(state)?.1)
    }

    /// (f, h) of the embedded ODE.
    pub fn embedded_rhs(&self, state: &SystemState) -> Result<(DVector<f64>, DVector<f64>)> {
        let f = self.eval_f(state);
        let jac = self.eval_jacobians(state);
        let lu = Factorized::new(&jac.dg_dz)?;
        let rhs = &jac.dg_dx2 * self.x2(&f);
        Ok((f, -lu.solve_vec(&rhs)))
    }

    /// J = ∂f/∂x − ∂f/∂z (∂g/∂z)⁻¹ ∂g/∂x.
    pub fn eval_reduced_jacobian(&self, state: &SystemState) -> Result<DMatrix<f64>> {
        let jac = self.eval_jacobians(state);
        self.reduced_jacobian_from(&jac)
    }

    pub fn reduced_jacobian_from(&self, jac: &JacobianBundle) -> Result<DMatrix<f64>> {
        let lu = Factorized::new(&jac.dg_dz)?;
        let sol = lu.solve_mat(&self.dg_dx(jac));
        Ok(&jac.df_dx - &jac.df_dz * sol)
    }

    /// Checks that every device's vector field depends only on its own states and its own
    /// terminal voltage, by inspecting the Jacobian sparsity at `state`.
    pub fn check_modularity(&self, state: &SystemState) -> Result<()> {
        let jac = self.eval_jacobians(state);
        for d in &self.devices {
            let rows = d.x_range();
            let own_z = 2 * self.network.slot(d.bus).unwrap();
            for i in rows.clone() {
                for j in 0..self.n() {
                    if !rows.contains(&j) && jac.df_dx[(i, j)] != 0.0 {
                        return Err(Error::NotModular(format!(
                            "f[{i}] of the device at bus {} depends on x[{j}]",
                            d.bus
                        )));
                    }
                }
                for j in 0..self.m() {
                    if j != own_z && j != own_z + 1 && jac.df_dz[(i, j)] != 0.0 {
                        return Err(Error::NotModular(format!(
                            "f[{i}] of the device at bus {} depends on z[{j}]",
                            d.bus
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
