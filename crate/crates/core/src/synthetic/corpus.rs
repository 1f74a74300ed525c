use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sim::simulate_dyad;
use super::PolicySpec;
use crate::error::{Error, Result};
use crate::features::{CarId, DyadTrial, Site};
use crate::nominal::NominalLibrary;
use crate::seed::{derive_seed, rng_from_seed};

/// One simulated encounter. A positive `entry_offset` spawns B that many
/// seconds after A; a negative one spawns A after B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub trial_id: String,
    pub site: Site,
    pub seed: u64,
    /// Speed on the boundary circle, m/s.
    pub entry_speeds: [f64; 2],
    pub entry_offset: f64,
    /// Spawn displacement to the right of each car's nominal start, meters.
    pub lateral_offsets: [f64; 2],
    pub frame_rate: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::invalid(format!("frame rate must be positive, got {}", self.frame_rate)));
        }
        if self.entry_speeds.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("entry speeds must be finite and >= 0"));
        }
        if !self.entry_offset.is_finite() || self.lateral_offsets.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("entry offsets must be finite"));
        }
        Ok(())
    }
}

/// Gains used by default. Turn rate steers the lead back across track in every
/// region; acceleration tracks along track on the approach and exit legs; both
/// react mildly to the gap between the cars.
pub const REFERENCE_GAIN: [[f64; 4]; 2] = [[0.002, -0.003, 0.05, -0.1], [0.0, 0.001, -0.1, -0.1]];

/// A batch of randomized encounters sharing one policy. Entry speeds are drawn
/// on a `speed_step` grid so each car's nominal can be rebuilt from its
/// logged entry speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub trials: usize,
    pub site: Site,
    pub policy: PolicySpec,
    pub speed_range: [f64; 2],
    pub speed_step: f64,
    /// Range of the entry delay magnitude, seconds; the first car is random.
    pub offset_range: [f64; 2],
    /// Largest spawn displacement from the lane centre, meters.
    pub lateral_offset_max: f64,
    pub frame_rate: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            trials: 30,
            site: Site::Isr,
            policy: PolicySpec { gain: REFERENCE_GAIN, nonlin_amp: 0.0, noise_std: [0.01, 0.01] },
            speed_range: [3.0, 8.0],
            speed_step: 0.5,
            offset_range: [0.0, 3.0],
            lateral_offset_max: 0.5,
            frame_rate: 18.0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        let [lo, hi] = self.speed_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid(format!("speed range [{lo}, {hi}] must be positive and ordered")));
        }
        if !(self.speed_step.is_finite() && self.speed_step > 0.0) {
            return Err(Error::invalid("speed step must be positive"));
        }
        let [olo, ohi] = self.offset_range;
        if !(olo >= 0.0 && ohi >= olo && ohi.is_finite()) {
            return Err(Error::invalid(format!("offset range [{olo}, {ohi}] must be non-negative and ordered")));
        }
        if !(self.lateral_offset_max.is_finite() && self.lateral_offset_max >= 0.0) {
            return Err(Error::invalid("lateral offset bound must be >= 0"));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::invalid("frame rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scenario: ScenarioConfig,
    /// `None` when no lead assumption reproduces itself; the trial is dropped.
    pub lead: Option<CarId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub trials: Vec<DyadTrial>,
    pub manifest: Vec<ManifestEntry>,
}

/// Draws the encounters of a corpus. Trial `i` depends only on `seed`, the
/// site and `i`.
pub fn sample_scenarios(config: &CorpusConfig, seed: u64) -> Result<Vec<ScenarioConfig>> {
    config.validate()?;
    let [lo, hi] = config.speed_range;
    let grid = ((hi - lo) / config.speed_step + 1e-9).floor() as u32;
    Ok((0..config.trials)
        .map(|i| {
            let trial_seed = derive_seed(seed, &format!("{}/trial/{i}", config.site));
            let mut rng = rng_from_seed(trial_seed);
            let mut speed = || lo + f64::from(rng.random_range(0..=grid)) * config.speed_step;
            let entry_speeds = [speed(), speed()];
            let delay = rng.random_range(config.offset_range[0]..=config.offset_range[1]);
            let entry_offset = if rng.random::<bool>() { delay } else { -delay };
            let m = config.lateral_offset_max;
            let lateral_offsets = [rng.random_range(-m..=m), rng.random_range(-m..=m)];
            ScenarioConfig {
                trial_id: format!("{}-{i:03}", config.site),
                site: config.site,
                seed: trial_seed,
                entry_speeds,
                entry_offset,
                lateral_offsets,
                frame_rate: config.frame_rate,
            }
        })
        .collect())
}

/// Simulates a corpus in parallel. `library` must already hold a nominal for
/// every grid speed in the configured range. Trials whose lead is not
/// self-consistent are dropped with a warning and listed without a lead.
pub fn generate_corpus(config: &CorpusConfig, seed: u64, library: &NominalLibrary) -> Result<Corpus> {
    let scenarios = sample_scenarios(config, seed)?;
    let nominal = |v: f64| {
        library.get(v).ok_or_else(|| Error::invalid(format!("no nominal prepared for entry speed {v} m/s")))
    };
    let sims = scenarios
        .par_iter()
        .map(|sc| {
            let [va, vb] = sc.entry_speeds;
            match simulate_dyad(sc, &config.policy, &config.policy, nominal(va)?, nominal(vb)?) {
                Ok(sim) => Ok(Some(sim)),
                Err(Error::InconsistentLead(id)) => {
                    log::warn!("trial {id}: no self-consistent lead; dropped");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = scenarios
        .into_iter()
        .zip(&sims)
        .map(|(scenario, sim)| ManifestEntry { scenario, lead: sim.as_ref().map(|s| s.lead) })
        .collect();
    Ok(Corpus { trials: sims.into_iter().flatten().map(|s| s.trial).collect(), manifest })
}
