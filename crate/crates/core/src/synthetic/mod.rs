//! Ground-truth dyad simulator.
//!
//! Each car integrates the unicycle model from its own nominal plus a known
//! feedback law `u = u_nominal + G^T z + eta * n(z) + noise`, where `z` is built
//! online exactly as the feature pipeline rebuilds it from the logged CSV.

mod corpus;
mod sim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{
    generate_corpus, sample_scenarios, Corpus, CorpusConfig, ManifestEntry, ScenarioConfig, REFERENCE_GAIN,
};
pub use sim::{simulate_assuming, simulate_dyad, OnlineSample, Simulation};

/// Distance added to the gap in the nonlinear term so it stays finite, meters.
pub const Z_FLOOR: f64 = 1.0;
/// Numerator of the nonlinear term, m^2/s^2; `nonlin_amp` scales it.
pub const NONLINEAR_SCALE: f64 = 1.0;
/// Speed above which a closed loop counts as divergent, m/s.
pub const SPEED_LIMIT: f64 = 30.0;

/// Feedback law of one simulated driver. `gain[0]` maps features to
/// acceleration, `gain[1]` to turn rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub gain: [[f64; 4]; 2],
    #[serde(default)]
    pub nonlin_amp: f64,
    #[serde(default)]
    pub noise_std: [f64; 2],
}

impl PolicySpec {
    pub fn feedforward() -> Self {
        Self { gain: [[0.0; 4]; 2], nonlin_amp: 0.0, noise_std: [0.0; 2] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gain.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::invalid("policy gains must be finite"));
        }
        if !(self.nonlin_amp.is_finite() && self.nonlin_amp >= 0.0) {
            return Err(Error::invalid(format!("nonlinear amplitude must be >= 0, got {}", self.nonlin_amp)));
        }
        if self.noise_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("noise standard deviations must be >= 0"));
        }
        Ok(())
    }
}

/// Bounded inverse-distance repulsion on acceleration only:
/// `(-c / (|(z1, z2)| + floor), 0)`.
pub fn nonlinear_term(z: &[f64; 4]) -> [f64; 2] {
    [-NONLINEAR_SCALE / (z[0].hypot(z[1]) + Z_FLOOR), 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// `estimate - truth` per entry.
    pub entry_error: [[f64; 4]; 2],
    /// `|G_est - G|_F / |G|_F`.
    pub relative_frobenius: f64,
    /// Entries with `|g| >= floor` whose estimate has the same sign.
    pub sign_agreement: usize,
    pub significant: usize,
}

impl RecoveryReport {
    pub fn all_signs_agree(&self) -> bool {
        self.sign_agreement == self.significant
    }
}

pub fn recovery_error(truth: &[[f64; 4]; 2], estimate: &[[f64; 4]; 2], floor: f64) -> RecoveryReport {
    let mut entry_error = [[0.0; 4]; 2];
    let (mut diff2, mut norm2) = (0.0, 0.0);
    let (mut agree, mut significant) = (0, 0);
    for r in 0..2 {
        for c in 0..4 {
            let (g, e) = (truth[r][c], estimate[r][c]);
            entry_error[r][c] = e - g;
            diff2 += (e - g) * (e - g);
            norm2 += g * g;
            if g.abs() >= floor {
                significant += 1;
                if g.signum() == e.signum() && e != 0.0 {
                    agree += 1;
                }
            }
        }
    }
    let relative_frobenius = if norm2 > 0.0 { (diff2 / norm2).sqrt() } else { diff2.sqrt() };
    RecoveryReport { entry_error, relative_frobenius, sign_agreement: agree, significant }
}
