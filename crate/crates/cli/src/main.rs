//! `srrl`: data generation, model evolution, value iteration, rollouts,
//! model refinement, baseline comparison and reporting.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::ExperimentConfig;
use srrl::{Error, Result};

#[derive(Parser)]
#[command(name = "srrl", version, about = "Symbolic-regression process models and model-based value iteration")]
struct Cli {
    /// Experiment configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Seeded runs per table cell; overrides the configuration.
    #[arg(long, global = true, value_name = "N")]
    runs: Option<usize>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training sets for each configured size and the grid test set.
    SimGen,
    /// Evolve models for every (target, n_f, n_s) cell and write the median table.
    Evolve {
        /// Training set; defaults to the generated ones for each configured size.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Test set; defaults to the generated grid.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Value iteration on a learned model (or the reference plant).
    Vi {
        /// Model JSON per state, in state order; omit to use the plant.
        #[arg(long = "model")]
        models: Vec<PathBuf>,
    },
    /// Greedy rollout on the reference plant.
    Rollout {
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        /// Value function; defaults to the one written by `vi`.
        #[arg(long)]
        value: Option<PathBuf>,
    },
    /// Model refinement experiment.
    Refine,
    /// Compare local linear regression with evolved models.
    Baseline {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Model JSON per target; omit to evolve.
        #[arg(long = "model")]
        models: Vec<PathBuf>,
    },
    /// Merge every result table below a directory.
    Report {
        /// Directory to scan; defaults to the output directory.
        dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::preset(config::ExperimentId::Custom),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.runs {
        cfg.runs = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    if let Command::Report { dir } = &cli.command {
        return commands::report(dir.as_ref().unwrap_or(&cli.out));
    }
    let ctx = Context {
        config: load_config(&cli)?,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::SimGen => commands::sim_gen(&ctx),
        Command::Evolve { data, test } => commands::evolve_cmd(&ctx, data.as_deref(), test.as_deref()),
        Command::Vi { models } => commands::vi(&ctx, models),
        Command::Rollout { models, value } => commands::rollout_cmd(&ctx, models, value.as_deref()),
        Command::Refine => commands::refine(&ctx),
        Command::Baseline { data, test, models } => commands::baseline(&ctx, data.as_deref(), test.as_deref(), models),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
