//! Device parameter files.
//!
//! ```toml
//! [[device]]
//! bus = 1
//! kind = "classical_sg_pi"
//! M = 0.075
//! ...
//! ```
//!
//! Every key besides `bus` and `kind` is a named numeric parameter.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::device::Device;
use crate::model::registry::{DeviceRegistry, ParamSet};

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceEntry {
    pub bus: usize,
    pub params: ParamSet,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviceFile {
    pub devices: Vec<DeviceEntry>,
}

fn toml_error(src: &str, err: &toml::de::Error) -> Error {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &src[..span.start.min(src.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::Parse { line, column, message: err.message().to_string() }
}

pub fn parse_devices_str(src: &str) -> Result<DeviceFile> {
    let table: toml::Table = src.parse().map_err(|e| toml_error(src, &e))?;
    let Some(list) = table.get("device") else {
        return Err(Error::MissingSection("device".into()));
    };
    let list = list
        .as_array()
        .ok_or_else(|| Error::Parse { line: 0, column: 0, message: "`device` must be an array of tables".into() })?;
    let mut devices = Vec::with_capacity(list.len());
    for (k, item) in list.iter().enumerate() {
        let entry = item.as_table().ok_or_else(|| Error::Parse {
            line: 0,
            column: 0,
            message: format!("device #{} is not a table", k + 1),
        })?;
        let bus = entry
            .get("bus")
            .and_then(|v| v.as_integer())
            .filter(|b| *b >= 1)
            .ok_or_else(|| Error::Parse { line: 0, column: 0, message: format!("device #{}: missing or invalid `bus`", k + 1) })?
            as usize;
        let kind = entry
            .get("kind")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Parse { line: 0, column: 0, message: format!("device #{}: missing `kind`", k + 1) })?;
        let mut params = ParamSet::new(kind);
        for (name, v) in entry {
            if name == "bus" || name == "kind" {
                continue;
            }
            let value = v
                .as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .ok_or_else(|| Error::InvalidParameter {
                    kind: kind.into(),
                    name: name.clone(),
                    reason: "must be numeric".into(),
                })?;
            params.values.insert(name.clone(), value);
        }
        devices.push(DeviceEntry { bus, params });
    }
    Ok(DeviceFile { devices })
}

pub fn parse_devices(path: impl AsRef<Path>) -> Result<DeviceFile> {
    parse_devices_str(&std::fs::read_to_string(path)?)
}

impl DeviceFile {
    pub fn build(&self, registry: &DeviceRegistry) -> Result<Vec<(usize, Arc<dyn Device>)>> {
        self.devices.iter().map(|d| Ok((d.bus, registry.build(&d.params)?))).collect()
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for d in &self.devices {
            out.push_str(&format!("[[device]]\nbus = {}\nkind = \"{}\"\n", d.bus, d.params.kind));
            for (k, v) in &d.params.values {
                out.push_str(&format!("{k} = {v:?}\n"));
            }
            out.push('\n');
        }
        out
    }
}
