use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{FitSettings, LINEAR_ADEQUACY_THRESHOLD};
use crate::error::{Error, Result};
use crate::features::{CarId, FeatureOptions, NormalizationMode, RegionRadii, Site};
use crate::gp::Bounds;
use crate::nominal::ScvxOptions;

fn default_inner() -> f64 {
    10.0
}
fn default_outer() -> f64 {
    25.0
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_folds() -> usize {
    5
}
fn default_threshold() -> f64 {
    LINEAR_ADEQUACY_THRESHOLD
}
fn default_permutations() -> usize {
    1000
}

/// One run's settings. Values with a published default may be omitted; every
/// other value must be written out so a config file fully describes its run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    pub features: FeaturesConfig,
    pub nominal: NominalConfig,
    pub fit: FitConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Trial CSV files, relative to the config file.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesConfig {
    pub rate_hz: f64,
    pub smoothing_window: usize,
    #[serde(default = "default_inner")]
    pub inner_radius_m: f64,
    #[serde(default = "default_outer")]
    pub outer_radius_m: f64,
    pub subtract_nominal_controls: bool,
    pub normalization: NormalizationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalConfig {
    /// Entry speeds are rounded to this grid before a nominal is solved.
    pub speed_step_mps: f64,
    pub scvx: ScvxOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    pub cross_validate: bool,
    #[serde(default = "default_threshold")]
    pub adequacy_threshold: f64,
    pub bounds: Bounds,
    pub n_starts: usize,
    /// Largest training subsample used for the hyperparameter search.
    pub max_opt_samples: usize,
    /// Largest training subsample used for the final fit.
    pub max_fit_samples: usize,
    /// Largest training subsample for the kernel comparison; 0 skips it.
    pub compare_max_samples: usize,
    /// Drivers with fewer samples in a distribution get no individual gain.
    pub driver_min_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub comparisons: Vec<PopulationPair>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { permutations: default_permutations(), comparisons: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Lead,
    Follow,
}

/// Selects individual drivers; absent fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationFilter {
    pub site: Option<Site>,
    /// Which car led the trial.
    pub lead: Option<CarId>,
    /// Whether the driver was the lead or the follower.
    pub role: Option<Role>,
}

impl PopulationFilter {
    pub fn matches(&self, site: Site, lead: CarId, agent: CarId) -> bool {
        let role = if agent == lead { Role::Lead } else { Role::Follow };
        self.site.is_none_or(|s| s == site)
            && self.lead.is_none_or(|l| l == lead)
            && self.role.is_none_or(|r| r == role)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationPair {
    pub name: String,
    pub a: PopulationFilter,
    pub b: PopulationFilter,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative input paths are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in &mut cfg.data.inputs {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.features;
        let bad = |m: String| Err(Error::Config(m));
        if !(f.rate_hz.is_finite() && f.rate_hz > 0.0) {
            return bad(format!("features.rate_hz must be positive, got {}", f.rate_hz));
        }
        if f.smoothing_window == 0 || f.smoothing_window % 2 == 0 {
            return bad(format!("features.smoothing_window must be odd, got {}", f.smoothing_window));
        }
        if !(f.inner_radius_m > 0.0 && f.outer_radius_m > f.inner_radius_m && f.outer_radius_m.is_finite()) {
            return bad("features radii must satisfy 0 < inner < outer".into());
        }
        if !(self.nominal.speed_step_mps.is_finite() && self.nominal.speed_step_mps > 0.0) {
            return bad("nominal.speed_step_mps must be positive".into());
        }
        let fit = &self.fit;
        if !(fit.train_fraction > 0.0 && fit.train_fraction < 1.0) {
            return bad(format!("fit.train_fraction must lie in (0, 1), got {}", fit.train_fraction));
        }
        if fit.cv_folds < 2 {
            return bad("fit.cv_folds must be at least 2".into());
        }
        if !(fit.adequacy_threshold.is_finite() && fit.adequacy_threshold > 0.0) {
            return bad("fit.adequacy_threshold must be positive".into());
        }
        fit.bounds.validate().map_err(|e| Error::Config(format!("fit.bounds: {e}")))?;
        if fit.n_starts == 0 {
            return bad("fit.n_starts must be at least 1".into());
        }
        if fit.max_opt_samples < 2 || fit.max_fit_samples < fit.max_opt_samples {
            return bad("fit sample caps must satisfy 2 <= max_opt_samples <= max_fit_samples".into());
        }
        if fit.driver_min_samples < 2 {
            return bad("fit.driver_min_samples must be at least 2".into());
        }
        for pair in &self.analysis.comparisons {
            if pair.a == pair.b {
                return bad(format!("comparison `{}` selects the same population twice", pair.name));
            }
        }
        Ok(())
    }

    pub fn feature_options(&self) -> FeatureOptions {
        FeatureOptions {
            rate: self.features.rate_hz,
            smoothing_window: self.features.smoothing_window,
            radii: RegionRadii { inner: self.features.inner_radius_m, outer: self.features.outer_radius_m },
            subtract_nominal_controls: self.features.subtract_nominal_controls,
        }
    }

    pub fn fit_settings(&self) -> FitSettings {
        FitSettings { bounds: self.fit.bounds, n_starts: self.fit.n_starts }
    }
}
