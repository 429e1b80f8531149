//! Built-in test systems, including the modified 9-bus system bundled under `data/`.

use std::sync::Arc;

use crate::equilibrium::{nearest_equilibrium, solve_equilibrium, NewtonOptions, Pin};
use crate::io::{build_system, parse_case_str, parse_devices_str};
use crate::model::device::{ClassicalSg, ClassicalSgPi, ConstPqLoad, Device, FluxDecaySg, InverterPq};
use crate::model::{Branch, Bus, BusKind, DeviceRegistry, Network, PowerSystem, SystemState};

pub const CASE9: &str = include_str!("../data/case9.m");
pub const NINE_BUS_DEVICES: &str = include_str!("../data/nine_bus_devices.toml");
pub const P_REFERENCE: &str = include_str!("../data/p_reference.txt");
pub const P_FITTED: &str = include_str!("../data/p_fitted.txt");

/// Bus-1 generator parameters of the 9-bus system.
pub fn bus1_generator() -> ClassicalSgPi {
    ClassicalSgPi::new(0.075, 0.032, 1.01, 0.061, 0.72, 0.10, 0.02).expect("valid parameters")
}

fn buses(kinds: &[BusKind]) -> Vec<Bus> {
    kinds.iter().enumerate().map(|(k, &kind)| Bus { id: k + 1, kind }).collect()
}

/// Two buses joined by one line, a device on bus 1 and optionally one on bus 2.
pub fn two_bus(line: Branch, gen: Arc<dyn Device>, other: Option<Arc<dyn Device>>) -> PowerSystem {
    let net = Network::from_branches(buses(&[BusKind::Passive, BusKind::Passive]), vec![line]).expect("valid network");
    let mut devices = vec![(1, gen)];
    if let Some(d) = other {
        devices.push((2, d));
    }
    PowerSystem::new(net, devices).expect("valid system")
}

/// Generator with PI regulator feeding a constant-PQ load over a lossless line.
pub fn smsl() -> PowerSystem {
    two_bus(
        Branch::lossless(1, 2, 0.1),
        Arc::new(bus1_generator()),
        Some(Arc::new(ConstPqLoad::new(0.6, 0.1).expect("valid load"))),
    )
}

/// Equilibrium of [`smsl`] nearest to flat start. Its equilibria differ only by a common
/// rotation of all angles, and ζ = p_d − P_g0 on every one of them.
pub fn smsl_equilibrium(system: &PowerSystem) -> SystemState {
    let mut seed = system.flat_start();
    seed.x[0] = 0.6 - 0.72;
    nearest_equilibrium(system, &seed).expect("smsl equilibrium")
}

/// Classical swing generator with P_g = p_d feeding a load; `lossy` adds line resistance.
pub fn pure_swing(d: f64, lossy: bool) -> PowerSystem {
    let r = if lossy { 0.05 } else { 0.0 };
    two_bus(
        Branch::from_impedance(1, 2, r, 0.1, 0.0),
        Arc::new(ClassicalSg::new(0.075, d, 1.01, 0.061, 0.6).expect("valid parameters")),
        Some(Arc::new(ConstPqLoad::new(0.6, 0.1).expect("valid load"))),
    )
}

fn against_infinite_bus(line: Branch, device: Arc<dyn Device>) -> PowerSystem {
    let net = Network::from_branches(buses(&[BusKind::Passive, BusKind::Infinite { theta: 0.0, v: 1.0 }]), vec![line])
        .expect("valid network");
    PowerSystem::new(net, vec![(1, device)]).expect("valid system")
}

/// Undamped classical machine against an infinite bus.
pub fn undamped_smib() -> PowerSystem {
    against_infinite_bus(
        Branch::lossless(1, 2, 0.2),
        Arc::new(ClassicalSg::new(0.075, 0.0, 1.05, 0.061, 0.8).expect("valid parameters")),
    )
}

/// Flux-decay machine against an infinite bus, bus-2 parameters of the 9-bus system.
pub fn smib_flux_decay() -> PowerSystem {
    against_infinite_bus(Branch::lossless(1, 2, 0.2), Arc::new(flux_decay_bus2()))
}

pub fn flux_decay_bus2() -> FluxDecaySg {
    FluxDecaySg::new(0.02, 0.003, 1.0, 0.2, 0.896, 0.12, 1.63, 1.52).expect("valid parameters")
}

pub fn inverter_bus3() -> InverterPq {
    InverterPq::new(10.0, 10.0, 0.1, 0.1, 0.85, -0.0365, 0.0833, 1.0).expect("valid parameters")
}

pub fn inverter_infinite_bus() -> PowerSystem {
    inverter_infinite_bus_with(0.0, 0.3)
}

/// Inverter behind r + jx to a stiff bus at angle 0 and unit voltage.
pub fn inverter_infinite_bus_with(r: f64, x: f64) -> PowerSystem {
    against_infinite_bus(Branch::from_impedance(1, 2, r, x, 0.0), Arc::new(inverter_bus3()))
}

/// Two inverters and a load on a triangle, with a stiff bus fixing the angle reference.
pub fn pure_inverter() -> PowerSystem {
    let net = Network::from_branches(
        buses(&[BusKind::Passive, BusKind::Passive, BusKind::Passive, BusKind::Infinite { theta: 0.0, v: 1.0 }]),
        vec![
            Branch::from_impedance(1, 2, 0.01, 0.1, 0.0),
            Branch::from_impedance(2, 3, 0.01, 0.1, 0.0),
            Branch::from_impedance(1, 3, 0.01, 0.1, 0.0),
            Branch::from_impedance(3, 4, 0.01, 0.1, 0.0),
        ],
    )
    .expect("valid network");
    let inv = |p, q| -> Arc<dyn Device> {
        Arc::new(InverterPq::new(1.0, 1.0, 0.1, 0.1, p, q, 0.0, 1.0).expect("valid parameters"))
    };
    PowerSystem::new(
        net,
        vec![(1, inv(0.3, 0.05)), (2, inv(0.2, 0.0)), (3, Arc::new(ConstPqLoad::new(0.4, 0.1).expect("valid load")))],
    )
    .expect("valid system")
}

/// The modified 9-bus system: stock case data, classical generator with PI regulator on
/// bus 1, flux-decay generator on bus 2 and a PQ inverter on bus 3.
pub fn nine_bus() -> PowerSystem {
    let case = parse_case_str(CASE9).expect("bundled case parses");
    let devices = parse_devices_str(NINE_BUS_DEVICES).expect("bundled devices parse");
    build_system(&case, &devices, &DeviceRegistry::builtin()).expect("bundled system builds")
}

/// Reference operating point x₀* (ζ, ω₁, δ₁, ω₂, δ₂, E'_q, P₃, Q₃).
pub const X0_STAR: [f64; 8] = [0.0, 0.0, 0.0431, 0.0, 0.4756, 1.0288, 0.8500, -0.0365];

/// Equilibrium of the 9-bus system with ζ pinned, seeded at flat start.
pub fn nine_bus_equilibrium(system: &PowerSystem, zeta: f64) -> SystemState {
    let pin = Pin::by_name(system, "zeta", zeta).expect("zeta exists");
    solve_equilibrium(system, &system.flat_start(), Some(pin), NewtonOptions::default())
        .expect("9-bus equilibrium")
        .state
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smsl_equilibrium_balances_power() {
        let sys = smsl();
        let s = smsl_equilibrium(&sys);
        assert!(sys.eval_f(&s).amax() < 1e-10);
        assert!(sys.eval_g(&s).amax() < 1e-10);
    }

    #[test]
    fn nine_bus_dimensions() {
        let sys = nine_bus();
        assert_eq!((sys.n(), sys.n1(), sys.n2(), sys.m()), (8, 3, 5, 18));
    }

    #[test]
    fn pure_inverter_has_no_x1() {
        let sys = pure_inverter();
        assert_eq!(sys.n1(), 0);
        assert_eq!(sys.m(), 6);
    }
}
