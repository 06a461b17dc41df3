//! Command-line front end for marginal dynamic linear model workflows.
//!
//! Exit codes: 0 success, 1 I/O or unexpected failure, 2 validation failure,
//! 3 convergence gate (R-hat at or above 1.1; artifacts still written),
//! 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mdlm_cli::commands::{self, DataPaths};
use mdlm_cli::config::RunConfig;
use mdlm_cli::CliError;

#[derive(Parser)]
#[command(
    name = "mdlm",
    about = "Marginal dynamic linear models for sparse longitudinal outcomes with daily covariates",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// TOML run configuration (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataOpts {
    /// Daily adherence CSV (patient_id,day,adherent)
    #[arg(long)]
    adherence: PathBuf,
    /// Outcome measurements CSV (patient_id,day,outcome_name,value)
    #[arg(long)]
    outcomes: PathBuf,
    /// Baseline covariates CSV (patient_id,<columns>)
    #[arg(long)]
    baseline: PathBuf,
}

#[derive(Args)]
struct McmcOverrides {
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Imputed datasets for cohorts with missing adherence
    #[arg(long)]
    imputations: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic cohort and write the three data files plus truth
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Fit the dynamic model; writes draws.csv and summary.csv
    Fit {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        mcmc: McmcOverrides,
    },
    /// Fit a non-dynamic adherence-summary model
    Baseline {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        mcmc: McmcOverrides,
        /// average | dichotomized
        #[arg(long)]
        mode: Option<String>,
        /// Dichotomization threshold; overrides the config list
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Posterior daily mean process per patient from a fitted draws file
    Smooth {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        data: DataOpts,
        /// Draws file from a fit run
        #[arg(long)]
        draws_file: PathBuf,
        /// Number of posterior draws used for smoothing
        #[arg(long)]
        smooth_draws: Option<usize>,
    },
    /// Multiple imputation of missing adherence
    Impute {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        adherence: PathBuf,
        /// Number of imputed datasets
        #[arg(long)]
        m: Option<usize>,
    },
    /// Side-by-side report for a dynamic fit and baseline fits
    Compare {
        #[command(flatten)]
        common: CommonOpts,
        /// Draws file from the dynamic model fit
        #[arg(long)]
        dlm: PathBuf,
        /// Baseline draws as label=path (repeatable)
        #[arg(long = "baseline-draws", value_parser = parse_labeled_path)]
        baseline_draws: Vec<(String, PathBuf)>,
        /// Central interval level
        #[arg(long, default_value_t = 0.90)]
        level: f64,
    },
}

fn parse_labeled_path(raw: &str) -> Result<(String, PathBuf), String> {
    match raw.split_once('=') {
        Some((label, path)) if !label.is_empty() => Ok((label.to_string(), PathBuf::from(path))),
        _ => Err("expected label=path".to_string()),
    }
}

fn apply_overrides(config: &mut RunConfig, mcmc: &McmcOverrides) {
    if let Some(v) = mcmc.chains {
        config.mcmc.chains = v;
    }
    if let Some(v) = mcmc.warmup {
        config.mcmc.warmup = v;
    }
    if let Some(v) = mcmc.draws {
        config.mcmc.draws = v;
    }
    if let Some(v) = mcmc.thin {
        config.mcmc.thin = v;
    }
    if let Some(v) = mcmc.imputations {
        config.imputation.m = v;
    }
}

fn run() -> Result<(), CliError> {
    if let Ok(threads) = std::env::var("MDLM_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { common } => {
            let config = RunConfig::load(common.config.as_deref())?;
            let seed = common.seed.unwrap_or(config.seed);
            commands::cmd_simulate(&config, seed, &common.out)
        }
        Command::Fit { common, data, mcmc } => {
            let mut config = RunConfig::load(common.config.as_deref())?;
            apply_overrides(&mut config, &mcmc);
            config.validate()?;
            let seed = common.seed.unwrap_or(config.seed);
            let paths = DataPaths {
                adherence: data.adherence,
                outcomes: data.outcomes,
                baseline: data.baseline,
            };
            commands::cmd_fit(&config, seed, &paths, &common.out)
        }
        Command::Baseline {
            common,
            data,
            mcmc,
            mode,
            threshold,
        } => {
            let mut config = RunConfig::load(common.config.as_deref())?;
            apply_overrides(&mut config, &mcmc);
            if let Some(p) = threshold {
                config.baseline.thresholds = vec![p];
            }
            if let Some(m) = &mode {
                config.baseline.mode = m.clone();
            }
            config.validate()?;
            let seed = common.seed.unwrap_or(config.seed);
            let mode = config.baseline.mode.clone();
            let paths = DataPaths {
                adherence: data.adherence,
                outcomes: data.outcomes,
                baseline: data.baseline,
            };
            commands::cmd_baseline(&config, seed, &paths, &mode, &common.out)
        }
        Command::Smooth {
            common,
            data,
            draws_file,
            smooth_draws,
        } => {
            let mut config = RunConfig::load(common.config.as_deref())?;
            if let Some(n) = smooth_draws {
                config.smooth.draws = n;
            }
            config.validate()?;
            let seed = common.seed.unwrap_or(config.seed);
            let paths = DataPaths {
                adherence: data.adherence,
                outcomes: data.outcomes,
                baseline: data.baseline,
            };
            commands::cmd_smooth(&config, seed, &paths, &draws_file, &common.out)
        }
        Command::Impute { common, adherence, m } => {
            let mut config = RunConfig::load(common.config.as_deref())?;
            if let Some(m) = m {
                config.imputation.m = m;
            }
            config.validate()?;
            let seed = common.seed.unwrap_or(config.seed);
            commands::cmd_impute(&config, seed, &adherence, &common.out)
        }
        Command::Compare {
            common,
            dlm,
            baseline_draws,
            level,
        } => commands::cmd_compare(&dlm, &baseline_draws, level, &common.out),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("mdlm: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
