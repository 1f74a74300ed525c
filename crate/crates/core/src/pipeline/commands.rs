use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PopulationPair, RunConfig};
use super::fit::{featurize, fit_all, DistributionFit, DriverFit};
use super::report::{
    comparison_csv, cv_csv, distributions_csv, drivers_csv, permutation_csv, plot_csvs, read_file, render_table,
    svd_csv, to_fixed_json, write_file, AnalysisReport, ExcludedTrial, FailedTrial, GainEntry, PermutationEntry,
    RunSummary, COMPONENTS,
};
use super::store::{self, load_trials};
use crate::analysis::{
    assemble_gain_matrix, permutation_test, svd_gains, ChannelGain, GainUnit, StatisticKind,
};
use crate::error::{Error, Result};
use crate::features::{write_trials, Control, Region};
use crate::nominal::{
    solve_nominal, standard_left_turn, straight_problem, NominalLibrary, NominalSolution, ScvxOptions,
    UnicycleState,
};
use crate::seed::derive_seed;
use crate::synthetic::{generate_corpus, Corpus, CorpusConfig, ManifestEntry};

/// Featurizes and fits a run directory and writes the fit outputs.
pub fn cmd_fit(run: &Path, cfg: &RunConfig) -> Result<AnalysisReport> {
    let trials = load_trials(&run.join(store::TRIALS))?;
    let (features, failures) = featurize(&trials, cfg)?;
    let (distributions, drivers) = fit_all(&features, cfg)?;
    if distributions.is_empty() {
        return Err(Error::EmptyInput("no distribution has enough samples to fit".into()));
    }
    let summary = RunSummary {
        trials: trials.len(),
        excluded: features
            .iter()
            .filter_map(|f| {
                f.exclusion.as_ref().map(|x| ExcludedTrial { trial_id: f.trial_id.clone(), reason: x.to_string() })
            })
            .collect(),
        failed: failures.into_iter().map(|(trial_id, error)| FailedTrial { trial_id, error }).collect(),
        samples: features.iter().filter(|f| f.exclusion.is_none()).map(|f| f.samples.len()).sum(),
    };
    let report = AnalysisReport { seed: cfg.seed, summary, distributions, drivers, ..Default::default() };
    write_file(&run.join(store::REPORT), &report.to_json()?)?;
    write_file(&run.join(store::DISTRIBUTIONS), &distributions_csv(&report)?)?;
    write_file(&run.join(store::DRIVERS), &drivers_csv(&report)?)?;
    write_file(&run.join(store::COMPARISON), &comparison_csv(&report)?)?;
    write_file(&run.join(store::CV), &cv_csv(&report)?)?;
    Ok(report)
}

/// Stacks the acceleration and turn-rate fits of each (site, lead, region)
/// into gain matrices and decomposes them.
pub fn gain_entries(distributions: &[DistributionFit]) -> Result<Vec<GainEntry>> {
    let mut pairs: BTreeMap<_, [Option<&DistributionFit>; 2]> = BTreeMap::new();
    for d in distributions {
        pairs.entry((d.key.site, d.key.lead, d.key.region)).or_default()[d.key.control.index()] = Some(d);
    }
    let mut out = Vec::new();
    for ((site, lead, region), [accel, angvel]) in pairs {
        let (Some(a), Some(w)) = (accel, angvel) else {
            log::warn!("{site}/{lead}/{region}: only one control fitted; no gain matrix");
            continue;
        };
        let ch = |d: &DistributionFit, unit| ChannelGain {
            gain: if unit == GainUnit::Raw { d.gain_raw } else { d.gain_normalized },
            unit,
        };
        let normalized = assemble_gain_matrix(ch(a, GainUnit::Normalized), ch(w, GainUnit::Normalized))?;
        let raw = assemble_gain_matrix(ch(a, GainUnit::Raw), ch(w, GainUnit::Raw))?;
        out.push(GainEntry {
            site,
            lead,
            region,
            svd_normalized: svd_gains(&normalized),
            svd_raw: svd_gains(&raw),
            normalized,
            raw,
            linear_adequate: [a.linear_adequate, w.linear_adequate],
        });
    }
    Ok(out)
}

struct TestTask<'a> {
    pair: &'a PopulationPair,
    region: Region,
    control: Control,
    component: usize,
    kind: StatisticKind,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn population<'a>(
    drivers: &'a [DriverFit],
    filter: &'a super::config::PopulationFilter,
    region: Region,
    control: Control,
) -> impl Iterator<Item = &'a DriverFit> {
    drivers.iter().filter(move |d| {
        let k = &d.key.distribution;
        k.region == region && k.control == control && filter.matches(k.site, k.lead, d.key.agent)
    })
}

/// Permutation tests of every configured population pair on every raw gain
/// component, both statistics. Pairs with fewer than two drivers on a side
/// are skipped with a warning.
pub fn permutation_entries(drivers: &[DriverFit], cfg: &RunConfig) -> Result<Vec<PermutationEntry>> {
    let mut tasks = Vec::new();
    for pair in &cfg.analysis.comparisons {
        for region in Region::ALL {
            for control in Control::ALL {
                let a: Vec<&DriverFit> = population(drivers, &pair.a, region, control).collect();
                let b: Vec<&DriverFit> = population(drivers, &pair.b, region, control).collect();
                if a.len() < 2 || b.len() < 2 {
                    log::warn!(
                        "comparison `{}` {region}/{control}: {} vs {} drivers; skipped",
                        pair.name,
                        a.len(),
                        b.len()
                    );
                    continue;
                }
                for component in 0..4 {
                    for kind in StatisticKind::ALL {
                        tasks.push(TestTask {
                            pair,
                            region,
                            control,
                            component,
                            kind,
                            a: a.iter().map(|d| d.gain_raw[component]).collect(),
                            b: b.iter().map(|d| d.gain_raw[component]).collect(),
                        });
                    }
                }
            }
        }
    }
    tasks
        .par_iter()
        .map(|t| {
            let key = format!("permutation/{}/{}/{}/{}/{}", t.pair.name, t.region, t.control, t.component, t.kind.name());
            let result = permutation_test(&t.a, &t.b, t.kind, cfg.analysis.permutations, derive_seed(cfg.seed, &key))?;
            Ok(PermutationEntry {
                comparison: t.pair.name.clone(),
                region: t.region,
                control: t.control,
                component: COMPONENTS[t.component].to_string(),
                n_a: t.a.len(),
                n_b: t.b.len(),
                result,
            })
        })
        .collect()
}

/// Adds gain matrices, SVDs and population tests to a fitted report.
pub fn analyze(report: &mut AnalysisReport, cfg: &RunConfig) -> Result<()> {
    report.gains = gain_entries(&report.distributions)?;
    report.permutation_tests = permutation_entries(&report.drivers, cfg)?;
    Ok(())
}

pub fn read_report(run: &Path) -> Result<AnalysisReport> {
    AnalysisReport::from_json(&read_file(&run.join(store::REPORT))?)
}

/// Extends the report in `run` and writes the analysis outputs.
pub fn cmd_analyze(run: &Path, cfg: &RunConfig) -> Result<AnalysisReport> {
    let mut report = read_report(run)?;
    analyze(&mut report, cfg)?;
    write_file(&run.join(store::REPORT), &report.to_json()?)?;
    write_file(&run.join(store::SVD), &svd_csv(&report)?)?;
    write_file(&run.join(store::PERMUTATIONS), &permutation_csv(&report)?)?;
    for (name, text) in plot_csvs(&report)? {
        write_file(&run.join(store::PLOTS).join(name), &text)?;
    }
    write_file(&run.join(store::TABLE), &render_table(&report))?;
    Ok(report)
}

/// Renders the summary table of the report in `run`.
pub fn cmd_report(run: &Path) -> Result<String> {
    let table = render_table(&read_report(run)?);
    write_file(&run.join(store::TABLE), &table)?;
    Ok(table)
}

/// Settings of `simulate`: the corpus and the solver for its nominals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub corpus: CorpusConfig,
    pub scvx: ScvxOptions,
}

impl SimulateConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.corpus.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_file(path)?).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

pub const MANIFEST: &str = "manifest.json";

/// Nominals for every grid speed of a corpus.
pub fn corpus_library(corpus: &CorpusConfig, scvx: ScvxOptions) -> Result<NominalLibrary> {
    corpus.validate()?;
    let mut library = NominalLibrary::new(corpus.speed_step, scvx)?;
    let [lo, hi] = corpus.speed_range;
    let n = ((hi - lo) / corpus.speed_step + 1e-9).floor() as usize;
    library.prepare((0..=n).map(|i| lo + i as f64 * corpus.speed_step))?;
    Ok(library)
}

/// Simulates a corpus and writes `trials.csv` and `manifest.json` to `out`.
pub fn cmd_simulate(cfg: &SimulateConfig, seed: u64, out: &Path) -> Result<Corpus> {
    let library = corpus_library(&cfg.corpus, cfg.scvx)?;
    let corpus = generate_corpus(&cfg.corpus, seed, &library)?;
    let mut buf = Vec::new();
    write_trials(&mut buf, &corpus.trials)?;
    write_file(&out.join(store::TRIALS), std::str::from_utf8(&buf).expect("utf-8 csv"))?;
    write_file(&out.join(MANIFEST), &to_fixed_json(&corpus.manifest)?)?;
    Ok(corpus)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    Ok(serde_json::from_str(&read_file(&dir.join(MANIFEST))?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NominalScenario {
    LeftTurn,
    Straight,
}

/// Settings of `nominal`. `goal` replaces the scenario's end state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalCommandConfig {
    pub scenario: NominalScenario,
    pub speed_mps: f64,
    pub scvx: ScvxOptions,
    #[serde(default)]
    pub goal: Option<UnicycleState>,
}

impl NominalCommandConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_file(path)?)
    }
}

/// Solves the configured nominal and writes it in the nominal CSV format.
pub fn cmd_nominal(cfg: &NominalCommandConfig, out: &Path) -> Result<NominalSolution> {
    let mut problem = match cfg.scenario {
        NominalScenario::LeftTurn => standard_left_turn(cfg.speed_mps)?,
        NominalScenario::Straight => straight_problem(cfg.speed_mps)?,
    };
    if let Some(goal) = cfg.goal {
        problem.goal = goal;
    }
    let sol = solve_nominal(&problem, &cfg.scvx)?;
    if !sol.converged {
        log::warn!("nominal stopped after {} iterations without converging", sol.iterations);
    }
    let mut buf = Vec::new();
    sol.trajectory.write_csv(&mut buf)?;
    write_file(out, std::str::from_utf8(&buf).expect("utf-8 csv"))?;
    Ok(sol)
}
