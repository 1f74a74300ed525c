use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::{eval_unchecked, gram_unchecked, rows_of, se};
use super::{Dataset, Hyperparams, KernelSpec};
use crate::error::{Error, Result};

/// Diagonal jitter ladder tried in order when factorizing `K + noise * I`.
pub(crate) const JITTER_LADDER: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];
const MAX_RELATIVE_RESIDUAL: f64 = 1e-8;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A fitted regression model. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel {
    spec: KernelSpec,
    hyperparams: Hyperparams,
    rows: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    gain: Vec<f64>,
    log_marginal: f64,
    jitter: f64,
}

pub(crate) struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub alpha: DVector<f64>,
    pub jitter: f64,
}

/// Factorizes `K + (noise + jitter) I`, escalating the jitter until the
/// Cholesky factor exists and the solve meets the residual bound.
pub(crate) fn factorize(k: &DMatrix<f64>, noise_var: f64, y: &DVector<f64>) -> Result<Factor> {
    let n = k.nrows();
    let y_norm = y.norm();
    for &jitter in &JITTER_LADDER {
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += noise_var + jitter;
        }
        let Some(chol) = Cholesky::new(a.clone()) else {
            continue;
        };
        let alpha = chol.solve(y);
        if alpha.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let residual = (&a * &alpha - y).norm();
        if residual <= MAX_RELATIVE_RESIDUAL * y_norm.max(f64::MIN_POSITIVE) || residual == 0.0 {
            return Ok(Factor { chol, alpha, jitter });
        }
    }
    Err(Error::IllConditionedGram { max_jitter: *JITTER_LADDER.last().unwrap() })
}

pub(crate) fn log_marginal_from(factor: &Factor, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let l = factor.chol.l_dirty();
    let half_logdet: f64 = (0..y.len()).map(|i| l[(i, i)].ln()).sum();
    -0.5 * y.dot(&factor.alpha) - half_logdet - 0.5 * n * LN_2PI
}

/// `sum_i alpha_i x_i`.
pub fn linear_gain(inputs: &DMatrix<f64>, alpha: &DVector<f64>) -> Vec<f64> {
    (0..inputs.ncols())
        .map(|j| (0..inputs.nrows()).map(|i| alpha[i] * inputs[(i, j)]).sum())
        .collect()
}

pub fn fit(dataset: &Dataset, spec: KernelSpec, theta: &Hyperparams) -> Result<GpModel> {
    theta.validate()?;
    let rows = rows_of(dataset.inputs());
    let k = gram_unchecked(spec, theta, &rows);
    let y = dataset.outputs();
    let factor = factorize(&k, theta.noise_var, y)?;
    let log_marginal = log_marginal_from(&factor, y);
    let gain = linear_gain(dataset.inputs(), &factor.alpha);
    Ok(GpModel {
        spec,
        hyperparams: *theta,
        rows,
        alpha: factor.alpha,
        gain,
        log_marginal,
        jitter: factor.jitter,
    })
}

/// `-1/2 y' (K + s I)^-1 y - 1/2 log|K + s I| - N/2 log 2 pi` with the noise
/// variance folded into the Gramian.
pub fn log_marginal_likelihood(dataset: &Dataset, spec: KernelSpec, theta: &Hyperparams) -> Result<f64> {
    theta.validate()?;
    let k = gram_unchecked(spec, theta, &rows_of(dataset.inputs()));
    let factor = factorize(&k, theta.noise_var, dataset.outputs())?;
    Ok(log_marginal_from(&factor, dataset.outputs()))
}

pub fn extract_gain(model: &GpModel) -> Vec<f64> {
    model.gain.clone()
}

impl GpModel {
    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    /// Diagonal jitter that was needed on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn training_rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Posterior mean as the kernel expansion `sum_i alpha_i k(x_i, x)`.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(self.alpha.iter())
            .map(|(xi, a)| a * eval_unchecked(self.spec, &self.hyperparams, xi, x))
            .sum()
    }

    /// Posterior mean through the gain: `g'x + beta * sum_i alpha_i se(x_i, x)`.
    pub fn predict_decomposed(&self, x: &[f64]) -> f64 {
        let linear: f64 = self.gain.iter().zip(x).map(|(g, v)| g * v).sum();
        let bumps = || -> f64 {
            self.rows
                .iter()
                .zip(self.alpha.iter())
                .map(|(xi, a)| a * se(xi, x, self.hyperparams.lengthscale))
                .sum()
        };
        match self.spec {
            KernelSpec::Linear => linear,
            KernelSpec::SquaredExp => bumps(),
            KernelSpec::Combined => linear + self.hyperparams.beta * bumps(),
        }
    }

    /// The nonlinear part `beta * sum_i alpha_i se(x_i, x)` of the combined mean.
    pub fn nonlinear_part(&self, x: &[f64]) -> f64 {
        match self.spec {
            KernelSpec::Linear => 0.0,
            KernelSpec::SquaredExp | KernelSpec::Combined => {
                let amp = if self.spec == KernelSpec::Combined { self.hyperparams.beta } else { 1.0 };
                amp * self
                    .rows
                    .iter()
                    .zip(self.alpha.iter())
                    .map(|(xi, a)| a * se(xi, x, self.hyperparams.lengthscale))
                    .sum::<f64>()
            }
        }
    }

    pub fn predict_many(&self, inputs: &DMatrix<f64>) -> Vec<f64> {
        rows_of(inputs).iter().map(|x| self.predict_mean(x)).collect()
    }
}

/// Per-dimension affine map `normalized = (raw - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    /// Dimensions that were constant in the data; they normalize to 0.
    pub degenerate: Vec<bool>,
}

impl Scaling {
    pub fn identity(dim: usize) -> Self {
        Self { offset: vec![0.0; dim], scale: vec![1.0; dim], degenerate: vec![false; dim] }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (c, s))| (v - c) / s)
            .collect()
    }

    pub fn invert(&self, normalized: &[f64]) -> Vec<f64> {
        normalized
            .iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (c, s))| v * s + c)
            .collect()
    }
}

/// Maps a gain fitted on normalized inputs back to raw input units.
///
/// Returns the raw gain and the constant `-sum_j g_j c_j / s_j` produced by the
/// offsets, so that `g_raw' z + constant == g_norm' (z - c) / s`.
pub fn denormalize_gain(g_normalized: &[f64], scaling: &Scaling) -> Result<(Vec<f64>, f64)> {
    if g_normalized.len() != scaling.dim() {
        return Err(Error::invalid(format!(
            "gain has {} entries but scaling has {} dimensions",
            g_normalized.len(),
            scaling.dim()
        )));
    }
    if let Some(j) = scaling.scale.iter().position(|s| *s == 0.0 || !s.is_finite()) {
        return Err(Error::invalid(format!("scale of dimension {j} is zero")));
    }
    let raw: Vec<f64> = g_normalized.iter().zip(&scaling.scale).map(|(g, s)| g / s).collect();
    let constant = -raw.iter().zip(&scaling.offset).map(|(g, c)| g * c).sum::<f64>();
    Ok((raw, constant))
}
