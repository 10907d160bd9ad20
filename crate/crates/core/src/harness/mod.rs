//! Experiment harness: configuration, parallel ensembles, convergence,
//! moment and martingale diagnostics, and report output.

mod config;
mod ensemble;
mod lln;
mod martingale;
mod moments;
mod output;
pub mod stats;

use serde::Serialize;

pub use config::ExperimentConfig;
pub use ensemble::{run_ensemble, run_ensemble_with, write_ensemble, Ensemble, LevelRuns, Replication};
pub use lln::{lln_report, ConvergenceReport, LevelError};
pub use martingale::{martingale_report, MartingaleReport};
pub use moments::{moment_report, MomentOrder, MomentReport};
pub use output::Report;

use crate::error::Result;
use crate::limit::{residual_profile, solve_limit, LimitSolution};
use crate::measure::TestFunction;
use crate::model::ModelSpec;
use crate::rng::stream_rng;
use crate::zoo::{audit_assumptions, AuditReport, ModelKind};

/// The configured observable panel, or the model's registry when empty.
pub fn panel(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<Vec<TestFunction>> {
    if cfg.observables.is_empty() {
        Ok(model.observables.clone())
    } else {
        model.panel(&cfg.observables)
    }
}

/// The limit on `[0, horizon]` with the configured solver options.
pub fn solve(cfg: &ExperimentConfig) -> Result<LimitSolution> {
    solve_limit(&cfg.model, cfg.horizon, &cfg.solver, cfg.seed)
}

/// Audits the configured model at levels `(n, 4n)`.
pub fn audit(cfg: &ExperimentConfig) -> Result<AuditReport> {
    let n = cfg.model.n;
    let mut rng = stream_rng(cfg.seed, u64::MAX);
    audit_assumptions(
        &|k| cfg.model.build(k),
        &|k, rng| cfg.model.random_state(k, rng),
        (n, 4 * n),
        cfg.audit_trials,
        &mut rng,
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub observables: Vec<String>,
    pub dt_probe: f64,
    pub max_residual: f64,
    /// Worst residual per observable.
    pub worst: Vec<(String, f64)>,
    pub tolerance: f64,
    pub scheme_error: f64,
    pub leakage: f64,
    pub clipped: f64,
    pub passed: bool,
}

/// Residual tolerance: `1e-6` for the compartment ODE, `10 · scheme_error`
/// otherwise.
pub fn residual_tolerance(kind: ModelKind, solution: &LimitSolution) -> f64 {
    match kind {
        ModelKind::Sir => 1e-6,
        _ => 10.0 * solution.scheme_error,
    }
}

/// Checks the computed limit against the weak equation on the bounded part
/// of the panel.
pub fn residual_report(cfg: &ExperimentConfig, solution: &LimitSolution) -> Result<ResidualReport> {
    let model = cfg.model.build(1)?;
    let bounded: Vec<TestFunction> =
        panel(cfg, &model)?.into_iter().filter(|h| h.sup_norm().is_finite()).collect();
    let profile = residual_profile(solution, &model, &bounded, cfg.residual_dt);
    let mut worst: Vec<(String, f64)> = bounded.iter().map(|h| (h.name().to_string(), 0.0)).collect();
    for (_, name, fd, rhs) in &profile {
        if let Some(w) = worst.iter_mut().find(|w| &w.0 == name) {
            w.1 = w.1.max((fd - rhs).abs());
        }
    }
    let max_residual = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let tolerance = residual_tolerance(cfg.model.model, solution);
    Ok(ResidualReport {
        observables: bounded.iter().map(|h| h.name().to_string()).collect(),
        dt_probe: cfg.residual_dt,
        max_residual,
        worst,
        tolerance,
        scheme_error: solution.scheme_error,
        leakage: solution.leakage,
        clipped: solution.clipped,
        passed: !profile.is_empty() && max_residual <= tolerance,
    })
}
