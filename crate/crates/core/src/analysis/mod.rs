//! Gain matrices and the statistics computed on them: SVD maneuver
//! directions, permutation tests between populations, cross-validation and
//! kernel comparison.

mod cv;
mod permutation;
mod svd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Hyperparams;

pub use cv::{compare_models, kfold_cv, fold_assignment, CvReport, FitSettings, ModelComparison};
pub use permutation::{permutation_test, PermutationResult, StatisticKind};
pub use svd::{svd_gains, SvdDecomp};

/// Default bound on `beta` below which a linear gain is taken to describe the
/// fit.
pub const LINEAR_ADEQUACY_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainUnit {
    /// Gains act on inputs normalized to `[-1, 1]`.
    Normalized,
    /// Gains act on raw features in meters.
    Raw,
}

/// `G^T`: row 0 maps features to acceleration, row 1 to turn rate. Columns
/// follow the feature order (relative position, lead deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    pub entries: [[f64; 4]; 2],
    pub unit: GainUnit,
}

impl GainMatrix {
    pub fn new(entries: [[f64; 4]; 2], unit: GainUnit) -> Result<Self> {
        if entries.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::invalid("gain entries must be finite"));
        }
        Ok(Self { entries, unit })
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.entries.map(|row| row.map(|g| c * g)), self.unit)
    }

    /// `G^T z`.
    pub fn apply(&self, z: &[f64; 4]) -> [f64; 2] {
        self.entries.map(|row| row.iter().zip(z).map(|(g, v)| g * v).sum())
    }
}

/// One fitted channel gain with its unit tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGain {
    pub gain: [f64; 4],
    pub unit: GainUnit,
}

/// Stacks separately fitted acceleration and turn-rate gains.
pub fn assemble_gain_matrix(g_accel: ChannelGain, g_angvel: ChannelGain) -> Result<GainMatrix> {
    if g_accel.unit != g_angvel.unit {
        return Err(Error::invalid(format!(
            "cannot stack {:?} acceleration gain with {:?} turn-rate gain",
            g_accel.unit, g_angvel.unit
        )));
    }
    GainMatrix::new([g_accel.gain, g_angvel.gain], g_accel.unit)
}

/// True iff `beta` is strictly below [`LINEAR_ADEQUACY_THRESHOLD`].
pub fn linear_adequacy(theta: &Hyperparams) -> bool {
    linear_adequacy_at(theta, LINEAR_ADEQUACY_THRESHOLD)
}

pub fn linear_adequacy_at(theta: &Hyperparams, threshold: f64) -> bool {
    theta.beta < threshold
}

pub fn mse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} observations",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("mse of an empty list"));
    }
    let sum: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(sum / predicted.len() as f64)
}
