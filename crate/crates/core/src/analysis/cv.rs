use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mse;
use crate::error::{Error, Result};
use crate::gp::{fit, optimize_hyperparams, Bounds, Dataset, Hyperparams, KernelSpec};
use crate::seed::{derive_seed, rng_from_seed};

/// Hyperparameter search settings shared by every fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub bounds: Bounds,
    pub n_starts: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { bounds: Bounds::default(), n_starts: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub per_fold_mse: Vec<f64>,
    pub per_fold_theta: Vec<Hyperparams>,
    pub min: f64,
    pub avg: f64,
    pub max: f64,
}

impl CvReport {
    fn from_folds(folds: Vec<(f64, Hyperparams)>) -> Self {
        let (per_fold_mse, per_fold_theta): (Vec<f64>, Vec<Hyperparams>) = folds.into_iter().unzip();
        let min = per_fold_mse.iter().copied().fold(f64::INFINITY, f64::min);
        let max = per_fold_mse.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let avg = per_fold_mse.iter().sum::<f64>() / per_fold_mse.len() as f64;
        Self { per_fold_mse, per_fold_theta, min, avg, max }
    }
}

/// Fold index of every row: a seeded shuffle dealt round-robin, so fold sizes
/// differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

/// Optimizes, fits and scores one split.
fn score(train: &Dataset, valid: &Dataset, spec: KernelSpec, settings: &FitSettings, seed: u64) -> Result<(f64, Hyperparams)> {
    let opt = optimize_hyperparams(train, spec, &settings.bounds, settings.n_starts, seed)?;
    let model = fit(train, spec, &opt.theta)?;
    let predicted = model.predict_many(valid.inputs());
    Ok((mse(&predicted, valid.outputs().as_slice())?, opt.theta))
}

/// K-fold cross-validation with hyperparameters re-optimized on every
/// training split.
pub fn kfold_cv(dataset: &Dataset, spec: KernelSpec, k: usize, seed: u64, settings: &FitSettings) -> Result<CvReport> {
    if k < 2 {
        return Err(Error::invalid(format!("cross-validation needs at least 2 folds, got {k}")));
    }
    if dataset.len() < k {
        return Err(Error::TooFewSamples { needed: k, got: dataset.len() });
    }
    let fold = fold_assignment(dataset.len(), k, seed);
    let folds = (0..k)
        .into_par_iter()
        .map(|f| {
            let (held, kept): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| fold[i] == f);
            let train = dataset.select(&kept)?;
            let valid = dataset.select(&held)?;
            score(&train, &valid, spec, settings, derive_seed(seed, &format!("fold/{f}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport::from_folds(folds))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    pub theta: Hyperparams,
    pub mse: f64,
}

/// Validation error of each kernel variant, each with its own optimized
/// hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub linear: VariantScore,
    pub squared_exp: VariantScore,
    pub combined: VariantScore,
}

impl ModelComparison {
    pub fn get(&self, spec: KernelSpec) -> &VariantScore {
        match spec {
            KernelSpec::Linear => &self.linear,
            KernelSpec::SquaredExp => &self.squared_exp,
            KernelSpec::Combined => &self.combined,
        }
    }
}

pub fn compare_models(train: &Dataset, valid: &Dataset, seed: u64, settings: &FitSettings) -> Result<ModelComparison> {
    if train.dim() != valid.dim() {
        return Err(Error::invalid("training and validation sets have different input dimensions"));
    }
    let scores = KernelSpec::ALL
        .par_iter()
        .map(|&spec| {
            let (mse, theta) = score(train, valid, spec, settings, derive_seed(seed, spec.name()))?;
            Ok(VariantScore { theta, mse })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelComparison { linear: scores[0], squared_exp: scores[1], combined: scores[2] })
}
