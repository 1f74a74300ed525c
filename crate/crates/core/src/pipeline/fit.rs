use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FitConfig, RunConfig};
use crate::analysis::{compare_models, kfold_cv, linear_adequacy_at, mse, CvReport, FitSettings, ModelComparison};
use crate::error::{Error, Result};
use crate::features::{
    boundary_entry, group_by_driver, group_distributions, normalize_with, process_trial, train_valid_split,
    CarId, DistributionKey, DriverKey, DyadTrial, NominalSet, NormalizationMode, TrialFeatures,
};
use crate::gp::{denormalize_gain, fit, optimize_hyperparams, Dataset, Hyperparams, KernelSpec, Scaling};
use crate::nominal::NominalLibrary;
use crate::seed::{derive_seed, rng_from_seed};

/// Result of fitting one pooled distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFit {
    pub key: DistributionKey,
    pub n_samples: usize,
    pub n_train: usize,
    pub n_valid: usize,
    /// Rows seen by the hyperparameter search.
    pub n_opt: usize,
    /// Rows in the final fit.
    pub n_fit: usize,
    pub theta: Hyperparams,
    pub log_marginal: f64,
    /// Validation error in control units.
    pub mse: f64,
    pub gain_normalized: [f64; 4],
    pub gain_raw: [f64; 4],
    /// Offset term that accompanies `gain_raw` when the scaling has offsets.
    pub gain_constant: f64,
    pub scaling: Scaling,
    pub linear_adequate: bool,
    pub cv: Option<CvReport>,
    pub comparison: Option<ModelComparison>,
}

/// Gain of one driver, fitted with the hyperparameters and input scaling of
/// the driver's distribution so that gains are comparable across drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverFit {
    pub key: DriverKey,
    pub n_samples: usize,
    pub gain_normalized: [f64; 4],
    pub gain_raw: [f64; 4],
}

fn to4(v: &[f64]) -> [f64; 4] {
    std::array::from_fn(|i| v[i])
}

/// Rows of `ds` in a seeded order truncated to `cap`.
fn subsample(ds: &Dataset, cap: usize, seed: u64) -> Result<Dataset> {
    if ds.len() <= cap {
        return Ok(ds.clone());
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    idx.truncate(cap);
    ds.select(&idx)
}

/// Normalizes, splits, optimizes the combined kernel on a capped training
/// subsample and reports validation error and gains.
pub fn fit_distribution(
    key: DistributionKey,
    raw: &Dataset,
    cfg: &FitConfig,
    mode: NormalizationMode,
    seed: u64,
) -> Result<DistributionFit> {
    let (norm, scaling) = normalize_with(raw, mode);
    let (train, valid) = train_valid_split(&norm, cfg.train_fraction, derive_seed(seed, "split"))?;
    // The search subsample is a prefix of the fit subsample.
    let fit_set = subsample(&train, cfg.max_fit_samples, derive_seed(seed, "subsample"))?;
    let opt_rows: Vec<usize> = (0..fit_set.len().min(cfg.max_opt_samples)).collect();
    let opt_set = fit_set.select(&opt_rows)?;
    let settings = FitSettings { bounds: cfg.bounds, n_starts: cfg.n_starts };
    let opt = optimize_hyperparams(&opt_set, KernelSpec::Combined, &cfg.bounds, cfg.n_starts, derive_seed(seed, "optimize"))?;
    let model = fit(&fit_set, KernelSpec::Combined, &opt.theta)?;
    let err = mse(&model.predict_many(valid.inputs()), valid.outputs().as_slice())?;
    let (gain_raw, gain_constant) = denormalize_gain(model.gain(), &scaling)?;
    let cv = if cfg.cross_validate {
        let cv_set = subsample(&norm, cfg.max_opt_samples, derive_seed(seed, "cv-subsample"))?;
        Some(kfold_cv(&cv_set, KernelSpec::Combined, cfg.cv_folds, derive_seed(seed, "cv"), &settings)?)
    } else {
        None
    };
    let comparison = if cfg.compare_max_samples > 0 {
        let cmp_set = subsample(&train, cfg.compare_max_samples, derive_seed(seed, "compare-subsample"))?;
        Some(compare_models(&cmp_set, &valid, derive_seed(seed, "compare"), &settings)?)
    } else {
        None
    };
    Ok(DistributionFit {
        key,
        n_samples: raw.len(),
        n_train: train.len(),
        n_valid: valid.len(),
        n_opt: opt_set.len(),
        n_fit: fit_set.len(),
        theta: opt.theta,
        log_marginal: model.log_marginal(),
        mse: err,
        gain_normalized: to4(model.gain()),
        gain_raw: to4(&gain_raw),
        gain_constant,
        scaling,
        linear_adequate: linear_adequacy_at(&opt.theta, cfg.adequacy_threshold),
        cv,
        comparison,
    })
}

pub fn fit_driver(key: DriverKey, raw: &Dataset, parent: &DistributionFit) -> Result<DriverFit> {
    let rows: Vec<Vec<f64>> = (0..raw.len()).map(|i| parent.scaling.apply(&raw.row(i))).collect();
    let ds = Dataset::from_rows(&rows, raw.outputs().as_slice())?;
    let model = fit(&ds, KernelSpec::Combined, &parent.theta)?;
    let (gain_raw, _) = denormalize_gain(model.gain(), &parent.scaling)?;
    Ok(DriverFit { key, n_samples: raw.len(), gain_normalized: to4(model.gain()), gain_raw: to4(&gain_raw) })
}

/// Speed of a car on its first frame within the analysis boundary.
pub fn entry_speed(trial: &DyadTrial, car: CarId, outer_radius: f64) -> Option<f64> {
    let traj = trial.traj(car);
    boundary_entry(traj, outer_radius).map(|i| traj[i].speed)
}

/// Nominals for every car at its quantized entry speed. Cars that never reach
/// the boundary fall back to the nominal at the median entry speed.
pub fn build_nominal_set(trials: &[DyadTrial], cfg: &RunConfig) -> Result<NominalSet> {
    let step = cfg.nominal.speed_step_mps;
    let mut library = NominalLibrary::new(step, cfg.nominal.scvx)?;
    let outer = cfg.features.outer_radius_m;
    let mut speeds: BTreeMap<(String, CarId), f64> = BTreeMap::new();
    for t in trials {
        for car in CarId::ALL {
            if let Some(v) = entry_speed(t, car, outer) {
                speeds.insert((t.trial_id.clone(), car), v.max(step));
            }
        }
    }
    let mut sorted: Vec<f64> = speeds.values().copied().collect();
    if sorted.is_empty() {
        return Err(Error::EmptyInput("no car reaches the analysis boundary".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    library.prepare(sorted.iter().copied())?;
    let get = |v: f64| library.get(v).cloned().expect("prepared above");
    Ok(NominalSet {
        default: get(median),
        per_car: speeds.into_iter().map(|(k, v)| (k, get(v))).collect(),
    })
}

/// Featurizes every trial in parallel. Trials that fail to process are
/// reported and left out.
pub fn featurize(trials: &[DyadTrial], cfg: &RunConfig) -> Result<(Vec<TrialFeatures>, Vec<(String, String)>)> {
    let nominals = build_nominal_set(trials, cfg)?;
    let options = cfg.feature_options();
    let results: Vec<_> = trials.par_iter().map(|t| process_trial(t, &nominals, &options)).collect();
    let mut features = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in trials.iter().zip(results) {
        match r {
            Ok(f) => features.push(f),
            Err(e) => {
                log::warn!("trial {}: {e}; skipped", t.trial_id);
                failures.push((t.trial_id.clone(), e.to_string()));
            }
        }
    }
    Ok((features, failures))
}

/// Fits every populated distribution, then every driver with enough samples.
/// Distributions too small to split are omitted with a warning.
pub fn fit_all(
    features: &[TrialFeatures],
    cfg: &RunConfig,
) -> Result<(Vec<DistributionFit>, Vec<DriverFit>)> {
    let datasets = group_distributions(features)?;
    let sites: Vec<_> = features.iter().map(|t| t.site).collect();
    for key in DistributionKey::all() {
        if sites.contains(&key.site) && !datasets.contains_key(&key) {
            log::warn!("distribution {} has no samples; omitted", key.label());
        }
    }
    let fits: Vec<(DistributionKey, Result<DistributionFit>)> = datasets
        .par_iter()
        .map(|(key, ds)| {
            let seed = derive_seed(cfg.seed, &key.label());
            (*key, fit_distribution(*key, ds, &cfg.fit, cfg.features.normalization, seed))
        })
        .collect();
    let mut dists = BTreeMap::new();
    for (key, r) in fits {
        match r {
            Ok(f) => {
                dists.insert(key, f);
            }
            Err(e @ Error::TooFewSamples { .. }) => log::warn!("distribution {}: {e}; omitted", key.label()),
            Err(e) => return Err(e),
        }
    }
    let drivers = group_by_driver(features)?;
    let driver_fits = drivers
        .par_iter()
        .filter(|(k, ds)| ds.len() >= cfg.fit.driver_min_samples && dists.contains_key(&k.distribution))
        .map(|(k, ds)| fit_driver(k.clone(), ds, &dists[&k.distribution]))
        .collect::<Result<Vec<_>>>()?;
    Ok((dists.into_values().collect(), driver_fits))
}
