//! Gaussian process regression with a linear + squared-exponential prior.
//!
//! The combined covariance is `k(x, y) = <x, y> + beta * exp(-|x - y|^2 / (2 l^2))`.
//! Because the linear part is an inner product, the posterior mean splits into
//! an explicit linear gain `g = sum_i alpha_i x_i` plus a weighted sum of
//! squared-exponential bumps, and `beta` measures how much of the fit needs the
//! nonlinear part.

mod kernel;
mod model;
mod optimize;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kernel::{gram_matrix, kernel_eval};
pub use model::{denormalize_gain, extract_gain, fit, log_marginal_likelihood, GpModel, Scaling};
pub use optimize::{
    optimize_from_starts, optimize_hyperparams, Bounds, Interval, Optimum, PROBE_STEPS,
};

/// Regression inputs (one row per sample) and scalar outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    outputs: DVector<f64>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, outputs: DVector<f64>) -> Result<Self> {
        if inputs.nrows() != outputs.len() {
            return Err(Error::invalid(format!(
                "{} input rows but {} outputs",
                inputs.nrows(),
                outputs.len()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        if inputs.ncols() == 0 {
            return Err(Error::invalid("dataset has zero input dimensions"));
        }
        if inputs.iter().chain(outputs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Self { inputs, outputs })
    }

    /// Builds a dataset from row slices.
    pub fn from_rows(rows: &[Vec<f64>], outputs: &[f64]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged input rows"));
        }
        let inputs = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(inputs, DVector::from_column_slice(outputs))
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    /// True when every input component lies in `[-1, 1]`.
    pub fn is_normalized(&self) -> bool {
        self.inputs.iter().all(|v| (-1.0..=1.0).contains(v))
    }

    /// Dataset restricted to the given row indices, in that order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("empty row selection"));
        }
        let inputs = self.inputs.select_rows(rows);
        let outputs = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.outputs[i]));
        Self::new(inputs, outputs)
    }
}

/// Kernel hyperparameters. `beta` weights the squared-exponential term of the
/// combined kernel; the squared-exponential-only variant ignores it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub beta: f64,
    pub lengthscale: f64,
    pub noise_var: f64,
}

impl Hyperparams {
    pub fn new(beta: f64, lengthscale: f64, noise_var: f64) -> Result<Self> {
        let theta = Self { beta, lengthscale, noise_var };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.lengthscale.is_finite() && self.lengthscale > 0.0) {
            return Err(Error::invalid(format!(
                "lengthscale must be > 0, got {}",
                self.lengthscale
            )));
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return Err(Error::invalid(format!(
                "noise variance must be >= 0, got {}",
                self.noise_var
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    SquaredExp,
    Combined,
}

impl KernelSpec {
    pub const ALL: [KernelSpec; 3] = [KernelSpec::Linear, KernelSpec::SquaredExp, KernelSpec::Combined];

    pub fn name(self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::SquaredExp => "squared_exp",
            KernelSpec::Combined => "combined",
        }
    }
}
