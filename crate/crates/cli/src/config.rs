//! Run configuration read from TOML. Every section is optional.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use augsync::roa::{FitOptions, SamplerConfig};
use augsync::simulate::{DomainBox, IntegratorConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Trailing ‖ż‖ for Property 1.
    pub zdot: f64,
    /// Trailing ‖f‖ for Property 2.
    pub f: f64,
    /// Algebraic residual used when projecting z.
    pub g: f64,
    /// Distance from the final state to the nearest equilibrium.
    pub equilibrium_distance: f64,
    pub rank: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { zdot: 1e-4, f: 1e-3, g: 1e-10, equilibrium_distance: 1e-4, rank: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub samples: usize,
    /// Half-width of the sampling box around the reference equilibrium, per x entry.
    pub half_width: f64,
    pub seed: u64,
    pub options: FitOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { samples: 500, half_width: 0.01, seed: 1, options: FitOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoaConfig {
    pub level: f64,
    /// Matrix file for P, or `bundled:fitted` / `bundled:reference`.
    pub p: String,
}

impl Default for RoaConfig {
    fn default() -> Self {
        Self { level: 1e-6, p: "bundled:fitted".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub integrator: IntegratorConfig,
    pub domain: Option<DomainBox>,
    pub thresholds: Thresholds,
    pub sampler: SamplerConfig,
    pub fit: FitConfig,
    pub roa: RoaConfig,
    pub outputs: Outputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig { t_end: 100.0, output_interval: 0.01, ..IntegratorConfig::default() },
            domain: None,
            thresholds: Thresholds::default(),
            sampler: SamplerConfig::default(),
            fit: FitConfig::default(),
            roa: RoaConfig::default(),
            outputs: Outputs::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        let t = &self.thresholds;
        for (name, v) in [
            ("zdot", t.zdot),
            ("f", t.f),
            ("g", t.g),
            ("equilibrium_distance", t.equilibrium_distance),
            ("rank", t.rank),
            ("fit.half_width", self.fit.half_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("threshold `{name}` must be > 0, got {v}");
            }
        }
        if self.sampler.n_samples == 0 || self.fit.samples == 0 {
            bail!("sample counts must be positive");
        }
        Ok(())
    }
}
