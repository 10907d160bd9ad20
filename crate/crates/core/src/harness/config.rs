use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{ClockMode, RecordSpec, RunOptions, DEFAULT_JUMP_CAP};
use crate::error::{Error, Result};
use crate::limit::SolverOptions;
use crate::zoo::ModelConfig;

/// Everything an experiment needs: model, levels, replications, horizon,
/// recording, seeding and solver tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    /// Scaling levels; empty means `[n]`.
    #[serde(default)]
    pub levels: Vec<u32>,
    #[serde(default = "defaults::replications")]
    pub replications: usize,
    #[serde(default = "defaults::horizon")]
    pub horizon: f64,
    #[serde(default = "defaults::grid_step")]
    pub grid_step: f64,
    #[serde(default)]
    pub seed: u64,
    /// Observable panel; empty selects the model's registry.
    #[serde(default)]
    pub observables: Vec<String>,
    #[serde(default = "defaults::moment_orders")]
    pub moment_orders: Vec<u32>,
    #[serde(default = "defaults::jump_cap")]
    pub jump_cap: u64,
    #[serde(default)]
    pub clock: ClockMode,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "defaults::slope_window")]
    pub slope_window: (f64, f64),
    /// Observable probed by `martingale`; defaults to the model's first.
    #[serde(default)]
    pub probe: Option<String>,
    #[serde(default = "defaults::residual_dt")]
    pub residual_dt: f64,
    #[serde(default = "defaults::audit_trials")]
    pub audit_trials: usize,
    #[serde(default = "defaults::write_trajectories")]
    pub write_trajectories: bool,
    /// Worker threads; unset uses all cores.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
}

mod defaults {
    pub fn replications() -> usize {
        20
    }
    pub fn horizon() -> f64 {
        10.0
    }
    pub fn grid_step() -> f64 {
        0.1
    }
    pub fn moment_orders() -> Vec<u32> {
        vec![1, 2, 3]
    }
    pub fn jump_cap() -> u64 {
        super::DEFAULT_JUMP_CAP
    }
    pub fn slope_window() -> (f64, f64) {
        (-0.65, -0.35)
    }
    pub fn residual_dt() -> f64 {
        0.01
    }
    pub fn audit_trials() -> usize {
        1000
    }
    pub fn write_trajectories() -> bool {
        true
    }
}

impl ExperimentConfig {
    pub fn new(model: ModelConfig) -> Self {
        serde_json::from_value(serde_json::to_value(&model).expect("serializable model"))
            .map(|mut c: ExperimentConfig| {
                c.model = model;
                c
            })
            .expect("defaults are valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn levels(&self) -> Vec<u32> {
        if self.levels.is_empty() {
            vec![self.model.n]
        } else {
            self.levels.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.levels();
        if levels.contains(&0) || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("levels must be positive and strictly increasing, got {levels:?}")));
        }
        if self.replications < 2 {
            return Err(Error::Config("replications must be at least 2".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.grid_step > 0.0) {
            return Err(Error::Config("grid_step must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Recording spec with `mass` always included.
    pub fn record_spec(&self) -> RecordSpec {
        let mut observables = self.observables.clone();
        if !observables.is_empty() && !observables.iter().any(|o| o == "mass") {
            observables.push("mass".into());
        }
        RecordSpec { grid_step: self.grid_step, observables, ..RecordSpec::default() }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions { jump_cap: self.jump_cap, clock: self.clock }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("serializable config");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
