//! File formats: case files, device parameters, dense matrices, trajectory CSV.

pub mod devices;
pub mod matpower;
pub mod matrix;
pub mod trajectory;

use crate::error::Result;
use crate::model::{DeviceRegistry, PowerSystem};

pub use devices::{parse_devices, parse_devices_str, DeviceEntry, DeviceFile};
pub use matpower::{parse_case, parse_case_str, CaseFile};
pub use matrix::{format_matrix, parse_matrix_str, read_matrix, write_matrix};
pub use trajectory::{read_state, read_trajectory, read_trajectory_str, write_state, write_trajectory, write_trajectory_string};

/// Network and loads from the case file, dynamic devices from the device file.
pub fn build_system(case: &CaseFile, devices: &DeviceFile, registry: &DeviceRegistry) -> Result<PowerSystem> {
    let network = case.network()?;
    let mut attached = case.loads()?;
    attached.extend(devices.build(registry)?);
    PowerSystem::new(network, attached)
}
