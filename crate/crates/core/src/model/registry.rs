use std::collections::BTreeMap;
use std::sync::Arc;

use super::device::{ClassicalSg, ClassicalSgPi, ConstPqLoad, Device, FluxDecaySg, InverterPq};
use crate::error::{Error, Result};

/// Named parameters for one device instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    pub kind: String,
    pub values: BTreeMap<String, f64>,
}

impl ParamSet {
    pub fn new(kind: impl Into<String>) -> Self {
        Self { kind: kind.into(), values: BTreeMap::new() }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.values.get(name).copied().ok_or_else(|| Error::InvalidParameter {
            kind: self.kind.clone(),
            name: name.into(),
            reason: "missing".into(),
        })
    }

    pub fn get_or(&self, name: &str, default: f64) -> f64 {
        self.values.get(name).copied().unwrap_or(default)
    }
}

pub type DeviceFactory = Box<dyn Fn(&ParamSet) -> Result<Arc<dyn Device>> + Send + Sync>;

/// Maps a device kind name to a constructor. Starts with the built-in kinds;
/// additional kinds can be registered at run time.
pub struct DeviceRegistry {
    factories: BTreeMap<String, DeviceFactory>,
}

impl Default for DeviceRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl DeviceRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(ClassicalSgPi::KIND, |p| {
            Ok(Arc::new(ClassicalSgPi::new(
                p.get("M")?,
                p.get("D")?,
                p.get("E")?,
                p.get("x_d_prime")?,
                p.get("P_g0")?,
                p.get("k1")?,
                p.get("k2")?,
            )?))
        });
        reg.register(ClassicalSg::KIND, |p| {
            Ok(Arc::new(ClassicalSg::new(
                p.get("M")?,
                p.get("D")?,
                p.get("E")?,
                p.get("x_d_prime")?,
                p.get("P_g")?,
            )?))
        });
        reg.register(FluxDecaySg::KIND, |p| {
            Ok(Arc::new(FluxDecaySg::new(
                p.get("M")?,
                p.get("D")?,
                p.get("T_d0_prime")?,
                p.get("x_q")?,
                p.get("x_d")?,
                p.get("x_d_prime")?,
                p.get("P_g")?,
                p.get("E_f")?,
            )?))
        });
        reg.register(InverterPq::KIND, |p| {
            Ok(Arc::new(InverterPq::new(
                p.get("tau1")?,
                p.get("tau2")?,
                p.get("d1")?,
                p.get("d2")?,
                p.get("P_ref")?,
                p.get("Q_ref")?,
                p.get("theta_ref")?,
                p.get("V_ref")?,
            )?))
        });
        reg.register(ConstPqLoad::KIND, |p| {
            Ok(Arc::new(ConstPqLoad::new(p.get("P_d")?, p.get("Q_d")?)?))
        });
        reg
    }

    pub fn register<F>(&mut self, kind: &str, factory: F)
    where
        F: Fn(&ParamSet) -> Result<Arc<dyn Device>> + Send + Sync + 'static,
    {
        self.factories.insert(kind.to_string(), Box::new(factory));
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, params: &ParamSet) -> Result<Arc<dyn Device>> {
        let factory = self
            .factories
            .get(&params.kind)
            .ok_or_else(|| Error::UnknownDeviceKind(params.kind.clone()))?;
        factory(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_inverter_by_name() {
        let p = ParamSet::new("inverter_pq")
            .with("tau1", 10.0)
            .with("tau2", 10.0)
            .with("d1", 0.1)
            .with("d2", 0.1)
            .with("P_ref", 0.85)
            .with("Q_ref", -0.0365)
            .with("theta_ref", 0.0833)
            .with("V_ref", 1.0);
        let dev = DeviceRegistry::builtin().build(&p).unwrap();
        assert_eq!(dev.kind(), "inverter_pq");
        assert_eq!(dev.n_x2(), 2);
    }

    #[test]
    fn missing_parameter_is_reported() {
        let p = ParamSet::new("const_pq_load").with("P_d", 1.0);
        let err = DeviceRegistry::builtin().build(&p).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { ref name, .. } if name == "Q_d"));
    }

    #[test]
    fn unknown_kind() {
        assert!(matches!(
            DeviceRegistry::builtin().build(&ParamSet::new("hvdc")),
            Err(Error::UnknownDeviceKind(_))
        ));
    }
}
