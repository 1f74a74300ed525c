//! End-to-end runs: ingestion, fitting, population analysis and reports.

mod commands;
mod config;
mod fit;
mod report;
pub mod store;

pub use commands::{
    analyze, cmd_analyze, cmd_fit, cmd_nominal, cmd_report, cmd_simulate, corpus_library, gain_entries,
    permutation_entries, read_manifest, read_report, NominalCommandConfig, NominalScenario, SimulateConfig,
    MANIFEST,
};
pub use config::{
    AnalysisConfig, DataConfig, FeaturesConfig, FitConfig, NominalConfig, PopulationFilter, PopulationPair, Role,
    RunConfig,
};
pub use fit::{
    build_nominal_set, entry_speed, featurize, fit_all, fit_distribution, fit_driver, DistributionFit, DriverFit,
};
pub use report::{
    fmt_num, render_table, round_sig, to_fixed_json, AnalysisReport, ExcludedTrial, FailedTrial, GainEntry,
    PermutationEntry, RunSummary, COMPONENTS, REPORT_DIGITS,
};
pub use store::{cmd_ingest, load_trials, read_ingest_summary, FileCount, IngestSummary};
