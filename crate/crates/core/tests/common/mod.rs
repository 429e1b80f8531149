#![allow(dead_code)]

pub mod fd;

use augsync::cases;
use augsync::equilibrium::nearest_equilibrium;
use augsync::model::{PowerSystem, SystemState};
use augsync::simulate::{project_algebraic, ProjectionOptions};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every built-in test system, named.
pub fn systems() -> Vec<(&'static str, PowerSystem)> {
    vec![
        ("smsl", cases::smsl()),
        ("pure_swing", cases::pure_swing(0.1, false)),
        ("pure_swing_lossy", cases::pure_swing(0.1, true)),
        ("undamped_smib", cases::undamped_smib()),
        ("smib_flux_decay", cases::smib_flux_decay()),
        ("inverter_infinite_bus", cases::inverter_infinite_bus()),
        ("inverter_lossy", cases::inverter_infinite_bus_with(0.05, 0.3)),
        ("pure_inverter", cases::pure_inverter()),
        ("nine_bus", cases::nine_bus()),
    ]
}

/// An equilibrium near flat start, or flat start itself when none is found.
pub fn base_state(system: &PowerSystem) -> SystemState {
    nearest_equilibrium(system, &system.flat_start()).unwrap_or_else(|_| system.flat_start())
}

/// Compatible state from base.x perturbed by at most `width` per entry.
pub fn perturbed(system: &PowerSystem, base: &SystemState, dx: &[f64]) -> Option<SystemState> {
    let x = &base.x + DVector::from_column_slice(dx);
    let (z, _) = project_algebraic(system, &system.x2(&x), &base.z, ProjectionOptions::default()).ok()?;
    let s = SystemState::new(x, z);
    (s.is_finite() && s.z.iter().skip(1).step_by(2).all(|v| *v > 0.3)).then_some(s)
}

/// `count` random compatible states within `width` of an equilibrium.
pub fn random_states(system: &PowerSystem, count: usize, width: f64, seed: u64) -> Vec<SystemState> {
    let base = base_state(system);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        assert!(tries < 100 * count, "could not draw compatible states");
        let dx: Vec<f64> = (0..system.n()).map(|_| rng.gen_range(-width..width)).collect();
        if let Some(s) = perturbed(system, &base, &dx) {
            out.push(s);
        }
    }
    out
}
