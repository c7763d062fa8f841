//! `dmx` — command-line front end for the descriptor minimax estimation
//! library. Thin argument-parsing shell; all work happens in `dmx::cli`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dmx::cli::{self, CliError, Command, RunConfig};
use dmx::continuous::RiccatiConvention;
use dmx::io;
use dmx::ToleranceConfig;

#[derive(Parser)]
#[command(
    name = "dmx",
    about = "Minimax set-membership estimation for descriptor systems",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Cli,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Paper,
    Dual,
}

impl From<ConventionArg> for RiccatiConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Paper => RiccatiConvention::MirroredSign,
            ConventionArg::Dual => RiccatiConvention::StandardDual,
        }
    }
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Model JSON path or builtin:NAME (section3, scalar-example).
    #[arg(long)]
    model: String,
    /// Output directory for the emitted CSV files.
    #[arg(long)]
    out: PathBuf,
    /// RNG seed for disturbance sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Horizon override (steps) for discrete models.
    #[arg(long)]
    horizon: Option<usize>,
    /// File with one comma-separated direction vector per line.
    #[arg(long)]
    directions: Option<PathBuf>,
    /// Disturbance budget for inline simulation, in (0, 1].
    #[arg(long, default_value_t = 0.9)]
    margin: f64,
}

#[derive(Subcommand)]
enum Cli {
    /// Sample an admissible disturbance and simulate a trajectory.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the minimax filter over measurements.
    Filter {
        #[command(flatten)]
        common: CommonArgs,
        /// Measurements CSV (columns y1..yp).
        #[arg(long, conflicts_with = "simulate_inline")]
        measurements: Option<PathBuf>,
        /// Simulate measurements inline with --seed, and report true errors.
        #[arg(long)]
        simulate_inline: bool,
    },
    /// Per-step observability / non-causality diagnostics.
    Observability {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Integrate the continuous-time Riccati equation (and filter).
    Riccati {
        #[command(flatten)]
        common: CommonArgs,
        /// Fixed RK4 step; must divide every grid interval.
        #[arg(long)]
        step: Option<f64>,
        /// Riccati sign convention.
        #[arg(long, value_enum, default_value = "dual")]
        convention: ConventionArg,
        /// Output samples CSV (columns y1..yp, one row per grid point).
        #[arg(long)]
        measurements: Option<PathBuf>,
    },
    /// Minimax filter vs. full-column-rank Kalman recursion, side by side.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn build_config(args: Cli) -> Result<RunConfig, CliError> {
    let (command, common, step, convention, measurements, simulate_inline) = match args {
        Cli::Simulate { common } => (Command::Simulate, common, None, None, None, false),
        Cli::Filter {
            common,
            measurements,
            simulate_inline,
        } => (
            Command::Filter,
            common,
            None,
            None,
            measurements,
            simulate_inline,
        ),
        Cli::Observability { common } => (Command::Observability, common, None, None, None, false),
        Cli::Riccati {
            common,
            step,
            convention,
            measurements,
        } => (
            Command::Riccati,
            common,
            step,
            Some(convention),
            measurements,
            false,
        ),
        Cli::Compare { common } => (Command::Compare, common, None, None, None, false),
    };
    let mut cfg = RunConfig::new(command, common.model, common.out);
    cfg.seed = common.seed;
    cfg.horizon = common.horizon;
    cfg.margin = common.margin;
    cfg.step = step;
    if let Some(c) = convention {
        cfg.convention = c.into();
    }
    cfg.measurements = measurements;
    cfg.simulate_inline = simulate_inline;
    if let Ok(raw) = std::env::var("DMX_RANK_TOL") {
        let v: f64 = raw
            .parse()
            .map_err(|e| CliError::Config(format!("DMX_RANK_TOL '{raw}': {e}")))?;
        if !(v > 0.0 && v < 1.0) {
            return Err(CliError::Config(format!(
                "DMX_RANK_TOL {v} must lie in (0, 1)"
            )));
        }
        cfg.tol = ToleranceConfig {
            rank_rel_tol: v,
            ..ToleranceConfig::default()
        };
    }
    // Direction files need the state dimension, which only discrete models
    // expose before running; continuous pipelines take no direction list.
    if let Some(path) = common.directions {
        if command != Command::Riccati {
            let scenario = io::load_discrete_source(&cfg.model, cfg.horizon, &cfg.tol)?;
            cfg.directions = io::read_directions(&path, scenario.model.n)?;
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = build_config(args.command).and_then(|cfg| cli::run(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dmx: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
