use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::regions::{
    boundary_entry, classify_trial, determine_lead, interaction_window, segment_regions, RegionRadii,
};
use super::signal::{derive_controls, resample, wrap_angle};
use super::{CarId, Control, DistributionKey, DyadTrial, Exclusion, FeatureSample, Frame, Region, Site};
use crate::error::{Error, Result};
use crate::gp::Dataset;
use crate::nominal::{NominalTrajectory, KNOT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// Resampling grid rate in Hz.
    pub rate: f64,
    /// Odd moving-average window for derived turn rates, in frames.
    pub smoothing_window: usize,
    pub radii: RegionRadii,
    /// Regress `u - u_nominal` instead of raw controls, so that the target is
    /// the feedback term alone.
    pub subtract_nominal_controls: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self { rate: 18.0, smoothing_window: 5, radii: RegionRadii::default(), subtract_nominal_controls: true }
    }
}

/// Nominal trajectories, each expressed in its own car's approach frame.
/// Trials without a specific entry use the default.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalSet {
    pub default: NominalTrajectory,
    pub per_car: BTreeMap<(String, CarId), NominalTrajectory>,
}

impl NominalSet {
    pub fn uniform(default: NominalTrajectory) -> Self {
        Self { default, per_car: BTreeMap::new() }
    }

    pub fn get(&self, trial_id: &str, car: CarId) -> &NominalTrajectory {
        self.per_car.get(&(trial_id.to_string(), car)).unwrap_or(&self.default)
    }
}

/// A trial on the `k / rate` grid with controls filled in. `k0[car]` is the
/// grid index of that car's first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTrial {
    pub trial: DyadTrial,
    pub k0: [i64; 2],
    pub rate: f64,
}

impl PreparedTrial {
    pub fn frame_at(&self, car: CarId, k: i64) -> Option<&Frame> {
        let i = usize::try_from(k - self.k0[car as usize]).ok()?;
        self.trial.traj(car).get(i)
    }

    pub fn grid_index(&self, t: f64) -> i64 {
        (t * self.rate).round() as i64
    }
}

pub fn prepare_trial(raw: &DyadTrial, options: &FeatureOptions) -> Result<PreparedTrial> {
    let mut k0 = [0; 2];
    let mut tracks: [Vec<Frame>; 2] = [Vec::new(), Vec::new()];
    for car in CarId::ALL {
        let (k, frames) = resample(raw.traj(car), options.rate)?;
        k0[car as usize] = k;
        tracks[car as usize] = derive_controls(&frames, options.smoothing_window)?;
    }
    let [traj_a, traj_b] = tracks;
    Ok(PreparedTrial {
        trial: DyadTrial { traj_a, traj_b, ..raw.clone() },
        k0,
        rate: options.rate,
    })
}

/// Rotates `p` by `quarter_turns * 90` degrees, reducing every bearing by that
/// amount. Exact in floating point.
pub fn rotate_quarter(p: [f64; 2], quarter_turns: u8) -> [f64; 2] {
    match quarter_turns % 4 {
        0 => p,
        1 => [-p[1], p[0]],
        2 => [-p[0], -p[1]],
        _ => [p[1], -p[0]],
    }
}

/// Quarter turns that bring the lead car's heading at its boundary entry to
/// bearing 0, so that the lead approaches from the south.
pub fn lead_alignment(lead_traj: &[Frame], radii: &RegionRadii) -> Result<u8> {
    let i = boundary_entry(lead_traj, radii.outer)
        .ok_or_else(|| Error::invalid("lead car never reaches the analysis boundary"))?;
    let q = (wrap_angle(lead_traj[i].heading) / FRAC_PI_2).round() as i64;
    Ok(q.rem_euclid(4) as u8)
}

/// `z = (R(p_B - p_A), R(p_lead) - p_nominal)` with `R` the lead alignment.
pub fn feature_vector(
    pos_a: [f64; 2],
    pos_b: [f64; 2],
    lead: CarId,
    nominal_pos: [f64; 2],
    quarter_turns: u8,
) -> [f64; 4] {
    let rel = rotate_quarter([pos_b[0] - pos_a[0], pos_b[1] - pos_a[1]], quarter_turns);
    let lead_pos = rotate_quarter(if lead == CarId::A { pos_a } else { pos_b }, quarter_turns);
    [rel[0], rel[1], lead_pos[0] - nominal_pos[0], lead_pos[1] - nominal_pos[1]]
}

/// Feature samples describing `agent` over the interaction window. The lead's
/// deviation is taken at equal elapsed time since it crossed the analysis
/// boundary; frames beyond the nominal's duration are dropped with a warning.
pub fn build_features(
    prepared: &PreparedTrial,
    lead: CarId,
    nominal_lead: &NominalTrajectory,
    agent: CarId,
    nominal_agent: Option<&NominalTrajectory>,
    radii: &RegionRadii,
) -> Result<Vec<FeatureSample>> {
    let trial = &prepared.trial;
    let Some((t_start, t_end)) = interaction_window(trial, radii.outer) else {
        return Ok(Vec::new());
    };
    let lead_traj = trial.traj(lead);
    let q = lead_alignment(lead_traj, radii)?;
    let entry_k = |car: CarId| -> Result<i64> {
        boundary_entry(trial.traj(car), radii.outer)
            .map(|i| prepared.k0[car as usize] + i as i64)
            .ok_or_else(|| Error::invalid(format!("car {car} never reaches the analysis boundary")))
    };
    let lead_entry = entry_k(lead)?;
    let agent_entry = entry_k(agent)?;
    let regions = segment_regions(trial.traj(agent), radii);
    let (k_start, k_end) = (prepared.grid_index(t_start), prepared.grid_index(t_end));
    let mut samples = Vec::new();
    let mut truncated = 0usize;
    for k in k_start..=k_end {
        let (Some(fa), Some(fb)) = (prepared.frame_at(CarId::A, k), prepared.frame_at(CarId::B, k)) else {
            continue;
        };
        let Some(region) = regions[(k - prepared.k0[agent as usize]) as usize] else {
            continue;
        };
        let tau_lead = (k - lead_entry) as f64 / prepared.rate;
        if tau_lead > nominal_lead.duration() + KNOT_TOL {
            truncated += 1;
            continue;
        }
        let z = feature_vector(fa.pos, fb.pos, lead, nominal_lead.state_at(tau_lead).pos, q);
        let own = if agent == CarId::A { fa } else { fb };
        let mut u = [own.accel.unwrap_or_default(), own.ang_vel.unwrap_or_default()];
        if let Some(nom) = nominal_agent {
            let ub = nom.control_at((k - agent_entry) as f64 / prepared.rate);
            u = [u[0] - ub[0], u[1] - ub[1]];
        }
        samples.push(FeatureSample { t: k as f64 / prepared.rate, z, accel: u[0], ang_vel: u[1], region, lead, agent });
    }
    if truncated > 0 {
        log::warn!(
            "trial {}: {truncated} frames for car {agent} fall past the end of the lead's nominal and were dropped",
            trial.trial_id
        );
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFeatures {
    pub trial_id: String,
    pub site: Site,
    pub lead: Option<CarId>,
    pub exclusion: Option<Exclusion>,
    pub samples: Vec<FeatureSample>,
}

/// Resamples, screens and featurizes one trial for both agents.
pub fn process_trial(raw: &DyadTrial, nominals: &NominalSet, options: &FeatureOptions) -> Result<TrialFeatures> {
    let mut out = TrialFeatures {
        trial_id: raw.trial_id.clone(),
        site: raw.site,
        lead: None,
        exclusion: raw.exclusion.clone(),
        samples: Vec::new(),
    };
    if out.exclusion.is_some() {
        return Ok(out);
    }
    let prepared = prepare_trial(raw, options)?;
    out.exclusion = classify_trial(&prepared.trial, &options.radii);
    if out.exclusion.is_some() {
        return Ok(out);
    }
    let lead = determine_lead(&prepared.trial, options.radii.inner)?;
    out.lead = Some(lead);
    let nominal_lead = nominals.get(&raw.trial_id, lead);
    for agent in CarId::ALL {
        let nominal_agent = options.subtract_nominal_controls.then(|| nominals.get(&raw.trial_id, agent));
        out.samples.extend(build_features(&prepared, lead, nominal_lead, agent, nominal_agent, &options.radii)?);
    }
    Ok(out)
}

fn to_datasets<K: Ord>(groups: BTreeMap<K, (Vec<Vec<f64>>, Vec<f64>)>) -> Result<BTreeMap<K, Dataset>> {
    groups
        .into_iter()
        .map(|(k, (rows, y))| Ok((k, Dataset::from_rows(&rows, &y)?)))
        .collect()
}

/// Pools samples of both agents by (site, lead, region), once per control.
/// Excluded trials contribute nothing; empty groups are absent.
pub fn group_distributions(trials: &[TrialFeatures]) -> Result<BTreeMap<DistributionKey, Dataset>> {
    let mut groups: BTreeMap<DistributionKey, (Vec<Vec<f64>>, Vec<f64>)> = BTreeMap::new();
    for trial in trials.iter().filter(|t| t.exclusion.is_none()) {
        for s in &trial.samples {
            for control in Control::ALL {
                let key = DistributionKey { site: trial.site, lead: s.lead, region: s.region, control };
                let g = groups.entry(key).or_default();
                g.0.push(s.z.to_vec());
                g.1.push(s.control(control));
            }
        }
    }
    to_datasets(groups)
}

/// One individual driver's samples within one distribution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DriverKey {
    pub distribution: DistributionKey,
    pub trial_id: String,
    pub agent: CarId,
}

pub fn group_by_driver(trials: &[TrialFeatures]) -> Result<BTreeMap<DriverKey, Dataset>> {
    let mut groups: BTreeMap<DriverKey, (Vec<Vec<f64>>, Vec<f64>)> = BTreeMap::new();
    for trial in trials.iter().filter(|t| t.exclusion.is_none()) {
        for s in &trial.samples {
            for control in Control::ALL {
                let key = DriverKey {
                    distribution: DistributionKey { site: trial.site, lead: s.lead, region: s.region, control },
                    trial_id: trial.trial_id.clone(),
                    agent: s.agent,
                };
                let g = groups.entry(key).or_default();
                g.0.push(s.z.to_vec());
                g.1.push(s.control(control));
            }
        }
    }
    to_datasets(groups)
}

/// Retained samples per (site, lead, region), counting both agents.
pub fn sample_counts(trials: &[TrialFeatures]) -> BTreeMap<(Site, CarId, Region), usize> {
    let mut counts = BTreeMap::new();
    for trial in trials.iter().filter(|t| t.exclusion.is_none()) {
        for s in &trial.samples {
            *counts.entry((trial.site, s.lead, s.region)).or_insert(0) += 1;
        }
    }
    counts
}
