use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Dataset, Scaling};
use crate::seed::rng_from_seed;

/// Smallest dataset that can be split into non-empty train and validation parts.
const MIN_SPLIT_ROWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Affine map of each dimension's `[min, max]` onto `[-1, 1]`.
    MinMax,
    /// Division by each dimension's largest magnitude; zero stays at zero, so
    /// gains are rescaled without picking up an offset.
    #[default]
    MaxAbs,
}

/// Min-max normalization of every input dimension onto `[-1, 1]`.
pub fn normalize_inputs(dataset: &Dataset) -> (Dataset, Scaling) {
    normalize_with(dataset, NormalizationMode::MinMax)
}

/// Normalizes inputs in the chosen mode. A constant dimension maps to 0 and is
/// flagged degenerate with unit scale.
pub fn normalize_with(dataset: &Dataset, mode: NormalizationMode) -> (Dataset, Scaling) {
    let x = dataset.inputs();
    let (n, d) = x.shape();
    let mut scaling = Scaling::identity(d);
    let mut out = DMatrix::zeros(n, d);
    for j in 0..d {
        let col = x.column(j);
        let (lo, hi) = (col.min(), col.max());
        if lo == hi {
            scaling.offset[j] = lo;
            scaling.degenerate[j] = true;
            continue;
        }
        match mode {
            NormalizationMode::MinMax => {
                scaling.offset[j] = 0.5 * (lo + hi);
                scaling.scale[j] = 0.5 * (hi - lo);
                // This form hits both endpoints exactly.
                for i in 0..n {
                    out[(i, j)] = (2.0 * (x[(i, j)] - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0);
                }
            }
            NormalizationMode::MaxAbs => {
                let m = lo.abs().max(hi.abs());
                scaling.scale[j] = m;
                for i in 0..n {
                    out[(i, j)] = (x[(i, j)] / m).clamp(-1.0, 1.0);
                }
            }
        }
    }
    let normalized = Dataset::new(out, dataset.outputs().clone())
        .expect("normalization preserves shape and finiteness");
    (normalized, scaling)
}

/// Seeded shuffle, then the first `ceil(fraction * N)` rows train and the rest
/// validate.
pub fn train_valid_split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must lie in (0, 1), got {fraction}")));
    }
    let n = dataset.len();
    if n < MIN_SPLIT_ROWS {
        return Err(Error::TooFewSamples { needed: MIN_SPLIT_ROWS, got: n });
    }
    // The slack keeps 0.8 * 10 from rounding up to 9.
    let n_train = ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    Ok((dataset.select(&idx[..n_train])?, dataset.select(&idx[n_train..])?))
}
