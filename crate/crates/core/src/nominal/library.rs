use std::collections::BTreeMap;

use rayon::prelude::*;

use super::scvx::{solve_nominal, standard_left_turn, ScvxOptions};
use super::NominalTrajectory;
use crate::error::{Error, Result};

/// Standard left-turn nominals solved per quantized entry speed.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalLibrary {
    step: f64,
    options: ScvxOptions,
    entries: BTreeMap<i64, NominalTrajectory>,
}

impl NominalLibrary {
    pub fn new(step: f64, options: ScvxOptions) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid(format!("speed step must be positive, got {step}")));
        }
        Ok(Self { step, options, entries: BTreeMap::new() })
    }

    fn key(&self, speed: f64) -> i64 {
        (speed / self.step).round() as i64
    }

    /// The speed a nominal is actually solved at for `speed`.
    pub fn quantize(&self, speed: f64) -> f64 {
        self.key(speed) as f64 * self.step
    }

    /// Solves any missing speeds, in parallel. A solve that stops short of
    /// convergence is kept with a warning; it still satisfies the corridor and
    /// the dynamics up to the reported residual.
    pub fn prepare(&mut self, speeds: impl IntoIterator<Item = f64>) -> Result<()> {
        let mut missing: Vec<i64> =
            speeds.into_iter().map(|s| self.key(s)).filter(|k| !self.entries.contains_key(k)).collect();
        missing.sort_unstable();
        missing.dedup();
        if let Some(&k) = missing.iter().find(|&&k| k <= 0) {
            return Err(Error::invalid(format!("entry speed {} quantizes to zero", k as f64 * self.step)));
        }
        let options = self.options;
        let step = self.step;
        let solved: Vec<(i64, NominalTrajectory)> = missing
            .par_iter()
            .map(|&k| {
                let speed = k as f64 * step;
                let sol = solve_nominal(&standard_left_turn(speed)?, &options)?;
                if !sol.converged {
                    log::warn!(
                        "nominal at {speed} m/s stopped after {} iterations (residual {:.2e})",
                        sol.iterations,
                        sol.trajectory.max_step_residual()
                    );
                }
                Ok((k, sol.trajectory))
            })
            .collect::<Result<_>>()?;
        self.entries.extend(solved);
        Ok(())
    }

    pub fn get(&self, speed: f64) -> Option<&NominalTrajectory> {
        self.entries.get(&self.key(speed))
    }

    pub fn speeds(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.keys().map(|&k| k as f64 * self.step)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantizes_and_caches() {
        let mut lib = NominalLibrary::new(0.5, ScvxOptions::default()).unwrap();
        assert_eq!(lib.quantize(4.74), 4.5);
        assert_eq!(lib.quantize(4.76), 5.0);
        lib.prepare([4.9, 5.1, 5.0]).unwrap();
        assert_eq!(lib.len(), 1);
        let nom = lib.get(5.2).unwrap();
        assert!((nom.states[0].speed - 5.0).abs() < 1e-6);
        assert!(lib.get(6.0).is_none());
        assert!(lib.prepare([0.1]).is_err());
    }
}
