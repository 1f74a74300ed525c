use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gainid::pipeline::{
    cmd_analyze, cmd_fit, cmd_ingest, cmd_nominal, cmd_report, cmd_simulate, NominalCommandConfig, RunConfig,
    SimulateConfig,
};

#[derive(Parser)]
#[command(name = "gainid", version, about = "Identify driver feedback gains from dyad trajectories")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate trial CSVs and write a run directory.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Trial CSVs; replaces `data.inputs` of the config when given.
        inputs: Vec<PathBuf>,
    },
    /// Fit every distribution and driver of an ingested run.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Add gain matrices, SVDs and population tests to a fitted run.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate a synthetic corpus with known gains.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides the number of trials in the config.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Solve a nominal trajectory and write it as CSV.
    Nominal {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the summary table of an analyzed run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_config(path: &PathBuf, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("starting worker pool")?;
    }
    match cli.command {
        Command::Ingest { config, out, inputs } => {
            let cfg = run_config(&config, None)?;
            let inputs = if inputs.is_empty() { cfg.data.inputs.clone() } else { inputs };
            let s = cmd_ingest(&inputs, &cfg, &out)?;
            println!("ingested {} trials ({} excluded, {} failed)", s.trials, s.excluded.len(), s.failed.len());
            for x in &s.excluded {
                println!("  excluded {}: {}", x.trial_id, x.reason);
            }
        }
        Command::Fit { config, out, seed } => {
            let report = cmd_fit(&out, &run_config(&config, seed)?)?;
            println!("fitted {} distributions and {} drivers", report.distributions.len(), report.drivers.len());
        }
        Command::Analyze { config, out, seed } => {
            let report = cmd_analyze(&out, &run_config(&config, seed)?)?;
            println!("{} gain matrices, {} permutation tests", report.gains.len(), report.permutation_tests.len());
        }
        Command::Simulate { config, out, seed, count } => {
            let mut cfg = SimulateConfig::load(&config)?;
            if let Some(n) = count {
                cfg.corpus.trials = n;
            }
            let corpus = cmd_simulate(&cfg, seed, &out)?;
            let dropped = corpus.manifest.iter().filter(|m| m.lead.is_none()).count();
            println!("simulated {} trials ({dropped} dropped)", corpus.trials.len());
        }
        Command::Nominal { config, out } => {
            let sol = cmd_nominal(&NominalCommandConfig::load(&config)?, &out)?;
            println!(
                "{} after {} iterations, {} nodes",
                if sol.converged { "converged" } else { "stopped" },
                sol.iterations,
                sol.trajectory.len()
            );
        }
        Command::Report { out } => print!("{}", cmd_report(&out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
