#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gainid::features::{CarId, Control, DistributionKey, Region, Site};
use gainid::nominal::ScvxOptions;
use gainid::pipeline::{RunConfig, SimulateConfig};
use gainid::synthetic::CorpusConfig;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// The checked-in run configuration for synthetic corpora.
pub fn synthetic_config() -> RunConfig {
    RunConfig::load(&workspace_root().join("configs/synthetic.toml")).expect("configs/synthetic.toml")
}

pub fn simulate_config(corpus: CorpusConfig) -> SimulateConfig {
    SimulateConfig { corpus, scvx: ScvxOptions::default() }
}

pub fn corpus_with_eta(eta: f64) -> CorpusConfig {
    let mut c = CorpusConfig::default();
    c.policy.nonlin_amp = eta;
    c
}

pub fn intersection_key(lead: CarId, control: Control) -> DistributionKey {
    DistributionKey { site: Site::Isr, lead, region: Region::Intersection, control }
}

/// Relative Frobenius distance `|est - truth|_F / |truth|_F`.
pub fn rel_frobenius(truth: &[[f64; 4]; 2], est: &[[f64; 4]; 2]) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for r in 0..2 {
        for c in 0..4 {
            diff += (est[r][c] - truth[r][c]).powi(2);
            norm += truth[r][c].powi(2);
        }
    }
    (diff / norm).sqrt()
}

/// Every regular file below `dir` with its path relative to `dir`, sorted.
pub fn files_below(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}
