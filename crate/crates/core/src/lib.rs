//! Structure-preserving power-system DAE models, simulation, equilibrium analysis,
//! detectability checks for augmented synchronization, and sampled region-of-attraction
//! certificates.

pub mod cases;
pub mod detectability;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod roa;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{PowerSystem, SystemState};
