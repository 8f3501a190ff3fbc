//! `predstack`: fit a core model plus candidate Bayesian logistic
//! regressions, stack them by leave-one-out predictive density, check the
//! ensemble with grouped posterior predictive checks, and summarize it with
//! focal-grid comparisons and gap posteriors.
//!
//! Exit codes: 0 ok, 1 runtime failure, 2 config error, 3 diagnostics
//! failure.

mod config;
mod pipeline;
mod schema;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{ObjectiveFlag, ResolvedRun, RunConfig};
use pipeline::DiagnosticsFailure;

#[derive(Parser)]
#[command(name = "predstack", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the stacking objective.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveFlag>,
    /// Cap on worker threads for multi-chain sampling.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GapSign {
    /// Reference minus comparison (e.g. male-minus-female risk).
    Interpretation,
    /// The mirrored difference, as some gap formulas are written.
    Formula,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the core and candidate models; write draw stores and diagnostics.
    Fit(CommonArgs),
    /// Compute LOO, stacking weights, and the Brier table.
    Stack(CommonArgs),
    /// Grouped posterior predictive checks and the hold-out validity check.
    Ppc(CommonArgs),
    /// Focal grid, cell posteriors, gap tables, and the comparison figure.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Sign convention for the gap tables.
        #[arg(long, value_enum, default_value = "interpretation")]
        gap_sign: GapSign,
    },
    /// Run every step and write an HTML index of the figures.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "interpretation")]
        gap_sign: GapSign,
    },
    /// Generate a synthetic dataset from a DGP description.
    Synth {
        /// DGP description (JSON).
        #[arg(long)]
        dgp: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(common: &CommonArgs) -> Result<ResolvedRun> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(objective) = common.objective {
        config.objective = objective;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    config.resolve()
}

fn set_thread_cap(common: &CommonArgs) {
    if let Some(threads) = common.threads {
        predstack_core::sampler::set_thread_cap(threads);
    }
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIAGNOSTICS: u8 = 3;

fn run() -> Result<(), (u8, anyhow::Error)> {
    let cli = Cli::parse();
    match cli.command {
        Command::Fit(common) => {
            set_thread_cap(&common);
            let run = resolve(&common).map_err(|e| (EXIT_CONFIG, e))?;
            pipeline::cmd_fit(&run).map_err(classify)
        }
        Command::Stack(common) => {
            set_thread_cap(&common);
            let run = resolve(&common).map_err(|e| (EXIT_CONFIG, e))?;
            let objective = run.config.objective.into();
            pipeline::cmd_stack(&run, objective).map_err(classify)
        }
        Command::Ppc(common) => {
            set_thread_cap(&common);
            let run = resolve(&common).map_err(|e| (EXIT_CONFIG, e))?;
            pipeline::cmd_ppc(&run).map_err(classify)
        }
        Command::Compare { common, gap_sign } => {
            set_thread_cap(&common);
            let run = resolve(&common).map_err(|e| (EXIT_CONFIG, e))?;
            pipeline::cmd_compare(&run, gap_sign == GapSign::Formula).map_err(classify)
        }
        Command::Report { common, gap_sign } => {
            set_thread_cap(&common);
            let run = resolve(&common).map_err(|e| (EXIT_CONFIG, e))?;
            let objective = run.config.objective.into();
            pipeline::cmd_report(&run, objective, gap_sign == GapSign::Formula).map_err(classify)
        }
        Command::Synth { dgp, seed, out } => {
            pipeline::cmd_synth(&dgp, seed, &out).map_err(classify)
        }
    }
}

/// Maps pipeline errors to exit codes: config-shaped problems to 2,
/// convergence failures to 3, everything else to 1.
fn classify(err: anyhow::Error) -> (u8, anyhow::Error) {
    if err.downcast_ref::<DiagnosticsFailure>().is_some() {
        return (EXIT_DIAGNOSTICS, err);
    }
    let text = format!("{err:#}");
    if text.contains("config field") || text.contains("invalid config") || text.contains("invalid schema")
    {
        return (EXIT_CONFIG, err);
    }
    (EXIT_RUNTIME, err)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
