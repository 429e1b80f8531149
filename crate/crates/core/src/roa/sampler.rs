//! Samplers over compatible states: hit-and-run inside a sublevel set, and iid draws in a box.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::VFunction;
use crate::error::{Error, Result};
use crate::model::{PowerSystem, SystemState};
use crate::simulate::{project_algebraic, DomainBox, ProjectionOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Independent walks; chain k uses seed + k and output is concatenated in chain order.
    pub chains: usize,
    pub burn_in: usize,
    /// Moves between recorded samples.
    pub thin: usize,
    /// Half-length of the initial chord along a direction.
    pub max_chord: f64,
    /// Per-coordinate scale applied to directions (empty for isotropic).
    pub scale: Vec<f64>,
    pub max_shrink: usize,
    pub domain: Option<DomainBox>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            seed: 0,
            chains: 4,
            burn_in: 100,
            thin: 5,
            max_chord: 1.0,
            scale: Vec::new(),
            max_shrink: 40,
            domain: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, system: &PowerSystem) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidParameter { kind: "sampler".into(), name: name.into(), reason: reason.into() })
        };
        if self.chains == 0 {
            return bad("chains", "need at least one chain");
        }
        if self.thin == 0 {
            return bad("thin", "must be positive");
        }
        if !(self.max_chord > 0.0 && self.max_chord.is_finite()) {
            return bad("max_chord", "must be positive and finite");
        }
        if !self.scale.is_empty() && self.scale.len() != system.n() {
            return Err(Error::Dimension(format!("scale has {} entries, system has n = {}", self.scale.len(), system.n())));
        }
        if self.scale.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("scale", "entries must be finite and non-negative");
        }
        if let Some(d) = &self.domain {
            d.validate(system)?;
        }
        Ok(())
    }

    fn chain_lengths(&self) -> Vec<usize> {
        let base = self.n_samples / self.chains;
        let extra = self.n_samples % self.chains;
        (0..self.chains).map(|k| base + usize::from(k < extra)).collect()
    }
}

/// Re-projects z for new x, warm-started at `z_guess`. None if projection fails.
fn project(system: &PowerSystem, x: DVector<f64>, z_guess: &DVector<f64>) -> Option<SystemState> {
    let x2 = system.x2(&x);
    let (z, _) = project_algebraic(system, &x2, z_guess, ProjectionOptions::default()).ok()?;
    let s = SystemState::new(x, z);
    s.is_finite().then_some(s)
}

fn compatible(system: &PowerSystem, x: DVector<f64>, z_guess: &DVector<f64>, domain: &DomainBox) -> Option<SystemState> {
    project(system, x, z_guess).filter(|s| domain.contains(s))
}

/// Output of the sublevel sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub states: Vec<SystemState>,
    /// Proposals inside the sublevel set but outside the domain box. Nonzero means the set
    /// is not contained in the box.
    pub domain_exits: usize,
    pub proposals: usize,
    pub accepted: usize,
}

fn direction(rng: &mut ChaCha8Rng, scale: &[f64], n: usize) -> DVector<f64> {
    loop {
        let mut d = DVector::from_fn(n, |i, _| {
            let g: f64 = rng.sample(StandardNormal);
            g * scale.get(i).copied().unwrap_or(1.0)
        });
        let norm = d.norm();
        if norm > 0.0 {
            d /= norm;
            return d;
        }
    }
}

fn run_chain(
    system: &PowerSystem,
    v: &dyn VFunction,
    level: f64,
    start: &SystemState,
    cfg: &SamplerConfig,
    domain: &DomainBox,
    seed: u64,
    count: usize,
) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = system.n();
    let mut current = start.clone();
    let mut out = Vec::with_capacity(count);
    let mut moves = 0usize;
    let (mut exits, mut proposals, mut accepted) = (0, 0, 0);
    while out.len() < count {
        let d = direction(&mut rng, &cfg.scale, n);
        let (mut lo, mut hi) = (-cfg.max_chord, cfg.max_chord);
        for _ in 0..cfg.max_shrink {
            let t = rng.gen_range(lo..hi);
            proposals += 1;
            if let Some(s) = project(system, &current.x + &d * t, &current.z) {
                if v.value(system, &s) <= level {
                    if domain.contains(&s) {
                        current = s;
                        accepted += 1;
                        break;
                    }
                    exits += 1;
                }
            }
            if t > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
        }
        moves += 1;
        if moves > cfg.burn_in && (moves - cfg.burn_in) % cfg.thin == 0 {
            out.push(current.clone());
        }
    }
    SampleSet { states: out, domain_exits: exits, proposals, accepted }
}

/// Samples the connected component of {𝒱 ≤ level} ∩ domain containing `reference` by
/// hit-and-run in x (z re-projected after every move, shrinking the chord on rejection).
pub fn sample_sublevel(
    system: &PowerSystem,
    v: &dyn VFunction,
    level: f64,
    reference: &SystemState,
    cfg: &SamplerConfig,
) -> Result<SampleSet> {
    cfg.validate(system)?;
    let domain = cfg.domain.clone().unwrap_or_else(|| DomainBox::default_for(system));
    let start = compatible(system, reference.x.clone(), &reference.z, &domain).ok_or_else(|| {
        Error::InvalidParameter {
            kind: "sampler".into(),
            name: "reference".into(),
            reason: "reference state cannot be made compatible inside the domain".into(),
        }
    })?;
    let v0 = v.value(system, &start);
    if v0 > level.max(0.0) + 1e-12 {
        return Err(Error::InvalidParameter {
            kind: "sampler".into(),
            name: "reference".into(),
            reason: format!("reference has V = {v0:.6e} above level {level}"),
        });
    }
    let lengths = cfg.chain_lengths();
    let chains: Vec<SampleSet> = lengths
        .par_iter()
        .enumerate()
        .map(|(k, &count)| run_chain(system, v, level, &start, cfg, &domain, cfg.seed.wrapping_add(k as u64), count))
        .collect();
    let mut all = SampleSet { states: Vec::with_capacity(cfg.n_samples), domain_exits: 0, proposals: 0, accepted: 0 };
    for c in chains {
        all.states.extend(c.states);
        all.domain_exits += c.domain_exits;
        all.proposals += c.proposals;
        all.accepted += c.accepted;
    }
    Ok(all)
}

/// Independent uniform draws of x in center ± half_width with z projected from the center.
/// Draws whose projection fails are redrawn (at most 100 attempts per sample).
pub fn sample_box(
    system: &PowerSystem,
    center: &SystemState,
    half_width: &[f64],
    cfg: &SamplerConfig,
) -> Result<Vec<SystemState>> {
    cfg.validate(system)?;
    let n = system.n();
    if half_width.len() != n {
        return Err(Error::Dimension(format!("half_width has {} entries, system has n = {n}", half_width.len())));
    }
    let domain = cfg.domain.clone().unwrap_or_else(|| DomainBox::default_for(system));
    let lengths = cfg.chain_lengths();
    let chains: Vec<Result<Vec<SystemState>>> = lengths
        .par_iter()
        .enumerate()
        .map(|(k, &count)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let mut found = None;
                for _ in 0..100 {
                    let x = DVector::from_fn(n, |i, _| {
                        let w = half_width[i];
                        center.x[i] + if w > 0.0 { rng.gen_range(-w..w) } else { 0.0 }
                    });
                    if let Some(s) = compatible(system, x, &center.z, &domain) {
                        found = Some(s);
                        break;
                    }
                }
                match found {
                    Some(s) => out.push(s),
                    None => {
                        return Err(Error::InvalidParameter {
                            kind: "sampler".into(),
                            name: "half_width".into(),
                            reason: "no compatible state found after 100 draws".into(),
                        })
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(cfg.n_samples);
    for c in chains {
        all.extend(c?);
    }
    Ok(all)
}
