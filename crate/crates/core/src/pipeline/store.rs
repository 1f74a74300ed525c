//! Run directory layout.
//!
//! ```text
//! <run>/trials.csv              every ingested trial, trial CSV schema
//! <run>/exclusions.csv          trial_id, reason for each excluded trial
//! <run>/ingest.json             per-file row and trial counts, exclusions, failures
//! <run>/report.json             fit results, extended in place by `analyze`
//! <run>/distributions.csv       one row per distribution: MSE, beta, gains
//! <run>/drivers.csv             one row per driver and distribution: gains
//! <run>/model_comparison.csv    kernel comparison per distribution
//! <run>/cv.csv                  per-fold cross-validation error
//! <run>/svd.csv                 singular triplets per gain matrix
//! <run>/permutation_tests.csv   population comparisons
//! <run>/plots/<control>_<pair>.csv  per-driver gain scatter data
//! <run>/table.txt               plain-text summary table
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::report::{read_file, to_fixed_json, write_file, ExcludedTrial, FailedTrial};
use crate::error::{Error, Result};
use crate::features::{classify_trial, prepare_trial, read_trials, write_trials, DyadTrial};

pub const TRIALS: &str = "trials.csv";
pub const EXCLUSIONS: &str = "exclusions.csv";
pub const INGEST: &str = "ingest.json";
pub const REPORT: &str = "report.json";
pub const DISTRIBUTIONS: &str = "distributions.csv";
pub const DRIVERS: &str = "drivers.csv";
pub const COMPARISON: &str = "model_comparison.csv";
pub const CV: &str = "cv.csv";
pub const SVD: &str = "svd.csv";
pub const PERMUTATIONS: &str = "permutation_tests.csv";
pub const PLOTS: &str = "plots";
pub const TABLE: &str = "table.txt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileCount {
    /// File name without its directory.
    pub file: String,
    pub rows: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub files: Vec<FileCount>,
    pub trials: usize,
    pub excluded: Vec<ExcludedTrial>,
    pub failed: Vec<FailedTrial>,
}

fn display_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn load_trials(path: &Path) -> Result<Vec<DyadTrial>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trials(std::io::BufReader::new(file), &path.display().to_string())
}

/// Parses and screens trial CSVs, then writes the validated store to `out`.
/// Trials that cannot be resampled are dropped and listed as failed.
pub fn cmd_ingest(paths: &[PathBuf], cfg: &RunConfig, out: &Path) -> Result<IngestSummary> {
    if paths.is_empty() {
        return Err(Error::EmptyInput("no input files given".into()));
    }
    let mut summary = IngestSummary::default();
    let mut trials = Vec::new();
    let mut seen = BTreeSet::new();
    for path in paths {
        let parsed = load_trials(path)?;
        let rows = parsed.iter().map(|t| t.traj_a.len() + t.traj_b.len()).sum();
        summary.files.push(FileCount { file: display_name(path), rows, trials: parsed.len() });
        for t in parsed {
            if !seen.insert(t.trial_id.clone()) {
                return Err(Error::invalid(format!("{}: trial `{}` appears in more than one file", path.display(), t.trial_id)));
            }
            trials.push(t);
        }
    }
    let options = cfg.feature_options();
    let screened: Vec<std::result::Result<DyadTrial, (String, Error)>> = trials
        .into_par_iter()
        .map(|mut t| match prepare_trial(&t, &options) {
            Ok(p) => {
                t.exclusion = classify_trial(&p.trial, &options.radii);
                Ok(t)
            }
            Err(e) => Err((t.trial_id, e)),
        })
        .collect();
    let mut kept = Vec::new();
    for r in screened {
        match r {
            Ok(t) => {
                if let Some(x) = &t.exclusion {
                    summary.excluded.push(ExcludedTrial { trial_id: t.trial_id.clone(), reason: x.to_string() });
                }
                kept.push(t);
            }
            Err((id, e)) => {
                log::warn!("trial {id}: {e}; dropped");
                summary.failed.push(FailedTrial { trial_id: id, error: e.to_string() });
            }
        }
    }
    summary.trials = kept.len();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut buf = Vec::new();
    write_trials(&mut buf, &kept)?;
    write_file(&out.join(TRIALS), std::str::from_utf8(&buf).expect("utf-8 csv"))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial_id", "reason"])?;
    for x in &summary.excluded {
        w.write_record([&x.trial_id, &x.reason])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_file(&out.join(EXCLUSIONS), std::str::from_utf8(&bytes).expect("utf-8 csv"))?;
    write_file(&out.join(INGEST), &to_fixed_json(&summary)?)?;
    Ok(summary)
}

pub fn read_ingest_summary(run: &Path) -> Result<IngestSummary> {
    Ok(serde_json::from_str(&read_file(&run.join(INGEST))?)?)
}
