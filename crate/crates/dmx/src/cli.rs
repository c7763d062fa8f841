//! Pipelines behind the `dmx` binary: simulate, filter, observability,
//! riccati and compare.
//!
//! All pipelines are deterministic: the same configuration and seed produce
//! byte-identical output files. Configuration problems (bad flags, malformed
//! or mismatched inputs) and runtime failures (infeasible propagation,
//! numerical breakdown) are distinguished so the binary can map them to
//! exit codes 2 and 1 respectively.

use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::continuous::{self, CoefficientForm, IntegrationOptions, RiccatiConvention};
use crate::discrete::{self, DirectionalError};
use crate::io::{self, EstimateRow, IoError};
use crate::linalg::ToleranceConfig;
use crate::model::{self, BuiltinScenario};

/// Pipeline failure, split by exit-code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Configuration or input parsing problem (exit code 2).
    #[error("{0}")]
    Config(String),
    /// Failure while running an otherwise well-formed pipeline (exit 1).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        // Everything the loader rejects is an input problem.
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Filter,
    Observability,
    Riccati,
    Compare,
}

/// One fully-resolved run of the harness.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    /// Path to a model JSON or `builtin:NAME`.
    pub model: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Directions for per-step error reporting.
    pub directions: Vec<DVector<f64>>,
    pub horizon: Option<usize>,
    /// RK4 step for the continuous pipeline.
    pub step: Option<f64>,
    pub convention: RiccatiConvention,
    pub tol: ToleranceConfig,
    /// Disturbance budget used by inline simulation.
    pub margin: f64,
    /// Measurements CSV for the filter pipeline; mutually exclusive with
    /// inline simulation.
    pub measurements: Option<PathBuf>,
    pub simulate_inline: bool,
}

impl RunConfig {
    pub fn new(command: Command, model: impl Into<String>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            command,
            model: model.into(),
            seed: 0,
            out_dir: out_dir.into(),
            directions: Vec::new(),
            horizon: None,
            step: None,
            convention: RiccatiConvention::default(),
            tol: ToleranceConfig::default(),
            margin: 0.9,
            measurements: None,
            simulate_inline: false,
        }
    }

    /// Check command-specific requirements before touching any input.
    pub fn validate(&self) -> Result<(), CliError> {
        self.tol.validate().map_err(config_err)?;
        if !(self.margin > 0.0 && self.margin <= 1.0) {
            return Err(CliError::Config(format!(
                "margin {} must lie in (0, 1]",
                self.margin
            )));
        }
        match self.command {
            Command::Filter => {
                if self.measurements.is_some() && self.simulate_inline {
                    return Err(CliError::Config(
                        "pass either --measurements or --simulate-inline, not both".into(),
                    ));
                }
                if self.measurements.is_none() && !self.simulate_inline {
                    return Err(CliError::Config(
                        "filter needs --measurements <csv> or --simulate-inline".into(),
                    ));
                }
            }
            Command::Riccati => {
                if let Some(step) = self.step {
                    if !step.is_finite() || step <= 0.0 {
                        return Err(CliError::Config(format!("step {step} must be positive")));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn load_scenario(cfg: &RunConfig) -> Result<BuiltinScenario, CliError> {
    Ok(io::load_discrete_source(&cfg.model, cfg.horizon, &cfg.tol)?)
}

fn simulate_scenario(
    scenario: &BuiltinScenario,
    cfg: &RunConfig,
) -> Result<(model::Trajectory, model::DisturbanceRealization), CliError> {
    let model = &scenario.model;
    let d = model::sample_disturbance(model, cfg.seed, cfg.margin).map_err(runtime_err)?;
    // Scenarios with a fixed anchor pin part of the initial state exactly.
    let d = if scenario.q.iter().any(|v| *v != 0.0) {
        d.with_fixed_q(model, scenario.q.clone(), cfg.margin)
            .map_err(runtime_err)?
    } else {
        d
    };
    let traj = model::propagate(model, &d, &scenario.free).map_err(runtime_err)?;
    Ok((traj, d))
}

/// Simulate a trajectory and write `trajectory.csv` + `realization.csv`.
pub fn run_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let scenario = load_scenario(cfg)?;
    let (traj, d) = simulate_scenario(&scenario, cfg)?;
    ensure_out_dir(&cfg.out_dir)?;
    io::write_trajectory_csv(&cfg.out_dir.join("trajectory.csv"), &traj).map_err(runtime_err)?;
    io::write_realization_csv(&cfg.out_dir.join("realization.csv"), &d).map_err(runtime_err)?;
    Ok(())
}

fn filter_rows(
    scenario: &BuiltinScenario,
    ys: &[DVector<f64>],
    truth: Option<&[DVector<f64>]>,
    directions: &[DVector<f64>],
    tol: &ToleranceConfig,
) -> Result<Vec<EstimateRow>, CliError> {
    let states = discrete::run_minimax(&scenario.model, ys, None, tol).map_err(runtime_err)?;
    let mut rows = Vec::with_capacity(states.len());
    for state in &states {
        let report = discrete::estimate(state, tol).map_err(runtime_err)?;
        let rho: Vec<DirectionalError> = directions
            .iter()
            .map(|l| discrete::directional_error(&report, l, tol))
            .collect();
        let abs_err = truth.map(|xs| {
            let diff = &xs[state.k] - &report.x_hat;
            diff.abs()
        });
        rows.push(EstimateRow {
            k: state.k,
            x_hat: report.x_hat,
            beta_hat: report.beta_hat,
            index: report.index,
            rho,
            abs_err,
        });
    }
    Ok(rows)
}

/// Run the minimax filter and write `estimates.csv`.
pub fn run_filter(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let scenario = load_scenario(cfg)?;
    let (ys, truth) = match (&cfg.measurements, cfg.simulate_inline) {
        (Some(path), _) => {
            let ys = io::read_measurements_csv(path, scenario.model.p)?;
            if ys.len() != scenario.model.horizon + 1 {
                return Err(CliError::Config(format!(
                    "{} measurement rows for horizon {}",
                    ys.len(),
                    scenario.model.horizon
                )));
            }
            (ys, None)
        }
        (None, _) => {
            let (traj, _) = simulate_scenario(&scenario, cfg)?;
            (traj.y.clone(), Some(traj.x))
        }
    };
    let rows = filter_rows(&scenario, &ys, truth.as_deref(), &cfg.directions, &cfg.tol)?;
    ensure_out_dir(&cfg.out_dir)?;
    io::write_estimates_csv(&cfg.out_dir.join("estimates.csv"), &rows).map_err(runtime_err)?;
    Ok(())
}

/// Per-step observability diagnostics; the information recursion does not
/// depend on measurements, so none are needed.
pub fn run_observability(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let scenario = load_scenario(cfg)?;
    let model = &scenario.model;
    let zeros: Vec<DVector<f64>> = (0..=model.horizon)
        .map(|_| DVector::zeros(model.p))
        .collect();
    let states = discrete::run_minimax(model, &zeros, None, &cfg.tol).map_err(runtime_err)?;
    let mut rows = Vec::with_capacity(states.len());
    for state in &states {
        let report = discrete::estimate(state, &cfg.tol).map_err(runtime_err)?;
        let flags = cfg
            .directions
            .iter()
            .map(|l| discrete::directional_error(&report, l, &cfg.tol).is_finite())
            .collect();
        rows.push((state.k, report.index, model.n - report.index, flags));
    }
    ensure_out_dir(&cfg.out_dir)?;
    io::write_observability_csv(&cfg.out_dir.join("observability.csv"), &rows)
        .map_err(runtime_err)?;
    Ok(())
}

/// Run minimax and full-rank Kalman recursions side by side on an inline
/// simulation and write `compare.csv` with per-step deviations.
pub fn run_compare(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let scenario = load_scenario(cfg)?;
    let model = &scenario.model;
    let (traj, _) = simulate_scenario(&scenario, cfg)?;
    let states = discrete::run_minimax(model, &traj.y, None, &cfg.tol).map_err(runtime_err)?;
    let mut rows = Vec::with_capacity(states.len());
    let mut kalman: Option<discrete::KalmanFullRankState> = None;
    let mut kalman_broken = false;
    for state in &states {
        let k = state.k;
        let next = if kalman_broken {
            None
        } else if k == 0 {
            discrete::kalman_init(model, &traj.y[0], None, &cfg.tol).ok()
        } else {
            kalman.as_ref().and_then(|prev| {
                discrete::kalman_step(prev, &model.step_matrices(k), &traj.y[k], &cfg.tol).ok()
            })
        };
        let (deviation, rank_ok) = match &next {
            Some(st) => {
                let report = discrete::estimate(state, &cfg.tol).map_err(runtime_err)?;
                (Some((&report.x_hat - &st.x_filt).norm()), true)
            }
            None => {
                kalman_broken = true;
                (None, false)
            }
        };
        kalman = next;
        rows.push((k, deviation, rank_ok));
    }
    ensure_out_dir(&cfg.out_dir)?;
    io::write_compare_csv(&cfg.out_dir.join("compare.csv"), &rows).map_err(runtime_err)?;
    Ok(())
}

/// Integrate the continuous-time Riccati equation (and the filter, when
/// measurements are supplied) and write `riccati.csv`.
pub fn run_riccati(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let model = io::load_continuous_source(&cfg.model, &cfg.tol)?;
    let red = continuous::svd_reduce(&model, &cfg.tol).map_err(runtime_err)?;
    let default_step = (model.grid[1] - model.grid[0]) / 32.0;
    let opts = IntegrationOptions {
        step: cfg.step.unwrap_or(default_step),
        convention: cfg.convention,
        form: CoefficientForm::Corrected,
        blowup_bound: 1e12,
    };
    let ktraj = continuous::riccati_integrate(&red, &opts, &cfg.tol).map_err(|e| match e {
        // An incompatible --step is a configuration problem, not a failure
        // of the sweep itself.
        continuous::ContinuousError::StepDoesNotDivide { .. } => config_err(e),
        other => runtime_err(other),
    })?;
    let x_hat = match &cfg.measurements {
        Some(path) => {
            let ys = io::read_measurements_csv(path, model.p)?;
            if ys.len() != model.grid.len() {
                return Err(CliError::Config(format!(
                    "{} measurement rows for {} grid points",
                    ys.len(),
                    model.grid.len()
                )));
            }
            let run = continuous::filter_integrate(&red, &ktraj, &ys, &opts, &cfg.tol)
                .map_err(runtime_err)?;
            Some(run.x_hat)
        }
        None => None,
    };
    ensure_out_dir(&cfg.out_dir)?;
    io::write_riccati_csv(
        &cfg.out_dir.join("riccati.csv"),
        &ktraj.times,
        &ktraj.k,
        x_hat.as_deref(),
    )
    .map_err(runtime_err)?;
    Ok(())
}

/// Dispatch a validated configuration.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command {
        Command::Simulate => run_simulate(cfg),
        Command::Filter => run_filter(cfg),
        Command::Observability => run_observability(cfg),
        Command::Riccati => run_riccati(cfg),
        Command::Compare => run_compare(cfg),
    }
}
