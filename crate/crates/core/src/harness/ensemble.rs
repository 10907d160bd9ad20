use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::engine::{simulate_with_rng, RunOptions, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{replication_stream, stream_rng};

/// One replication: its stream id, and either a path or the error message.
#[derive(Debug)]
pub struct Replication {
    pub n: u32,
    pub index: usize,
    pub stream: u64,
    pub outcome: std::result::Result<Trajectory, String>,
    pub wall_seconds: f64,
}

impl Replication {
    pub fn trajectory(&self) -> Option<&Trajectory> {
        self.outcome.as_ref().ok()
    }
}

#[derive(Debug)]
pub struct LevelRuns {
    pub n: u32,
    pub runs: Vec<Replication>,
}

impl LevelRuns {
    pub fn successes(&self) -> impl Iterator<Item = &Trajectory> {
        self.runs.iter().filter_map(Replication::trajectory)
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_err()).count()
    }
}

#[derive(Debug)]
pub struct Ensemble {
    pub config: ExperimentConfig,
    pub levels: Vec<LevelRuns>,
}

impl Ensemble {
    pub fn level(&self, n: u32) -> Option<&LevelRuns> {
        self.levels.iter().find(|l| l.n == n)
    }

    pub fn failures(&self) -> usize {
        self.levels.iter().map(LevelRuns::failures).sum()
    }
}

pub(crate) fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs `R` replications at every level, in parallel, with seeds derived
/// from `(seed, n, replication)`.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<Ensemble> {
    run_ensemble_with(cfg, &|_, _, _| {})
}

/// [`run_ensemble`] with a hook that may adjust each replication's run
/// options, given `(n, replication index)`.
pub fn run_ensemble_with(
    cfg: &ExperimentConfig,
    hook: &(dyn Fn(u32, usize, &mut RunOptions) + Sync),
) -> Result<Ensemble> {
    cfg.validate()?;
    let record = cfg.record_spec();
    let pool = pool(cfg.workers)?;
    let mut levels = Vec::new();
    for n in cfg.levels() {
        let model = cfg.model.build(n)?;
        let m0 = cfg.model.initial(n)?;
        let runs: Vec<Replication> = pool.install(|| {
            (0..cfg.replications)
                .into_par_iter()
                .map(|index| {
                    let stream = replication_stream(n, index as u32);
                    let mut opts = cfg.run_options();
                    hook(n, index, &mut opts);
                    let start = Instant::now();
                    let mut rng = stream_rng(cfg.seed, stream);
                    let outcome = simulate_with_rng(&model, &m0, cfg.horizon, &mut rng, &record, &opts)
                        .map_err(|e| e.to_string());
                    if let Err(e) = &outcome {
                        log::warn!("n = {n}, replication {index} failed: {e}");
                    }
                    Replication { n, index, stream, outcome, wall_seconds: start.elapsed().as_secs_f64() }
                })
                .collect()
        });
        levels.push(LevelRuns { n, runs });
    }
    Ok(Ensemble { config: cfg.clone(), levels })
}

#[derive(Debug, Serialize)]
struct ManifestRun {
    index: usize,
    stream: u64,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    jumps: Option<u64>,
    final_mass: Option<f64>,
    sup_mass: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ManifestLevel {
    n: u32,
    completed: usize,
    failed: usize,
    runs: Vec<ManifestRun>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config_hash: String,
    config: &'a ExperimentConfig,
    failures: usize,
    levels: Vec<ManifestLevel>,
}

fn trajectory_file(n: u32, index: usize) -> String {
    format!("trajectories/n{n}_r{index:04}.csv")
}

/// Writes `manifest.json`, `timing.json` and (when enabled) one CSV per
/// successful replication under `out`. The manifest holds no wall-clock
/// data, so identical configurations give identical manifests.
pub fn write_ensemble(ensemble: &Ensemble, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let cfg = &ensemble.config;
    if cfg.write_trajectories {
        std::fs::create_dir_all(out.join("trajectories"))?;
    }
    let mut levels = Vec::new();
    let mut timing = Vec::new();
    for level in &ensemble.levels {
        let mut runs = Vec::new();
        for r in &level.runs {
            timing.push(serde_json::json!({"n": r.n, "index": r.index, "wall_seconds": r.wall_seconds}));
            runs.push(match &r.outcome {
                Ok(t) => {
                    let file = cfg.write_trajectories.then(|| trajectory_file(r.n, r.index));
                    if let Some(f) = &file {
                        let w = std::io::BufWriter::new(std::fs::File::create(out.join(f))?);
                        t.write_csv(w)?;
                    }
                    ManifestRun {
                        index: r.index,
                        stream: r.stream,
                        status: "ok",
                        error: None,
                        file,
                        jumps: Some(t.total_jumps()),
                        final_mass: Some(t.final_mass()),
                        sup_mass: Some(t.sup_mass),
                        warnings: t.warnings.clone(),
                    }
                }
                Err(e) => ManifestRun {
                    index: r.index,
                    stream: r.stream,
                    status: "failed",
                    error: Some(e.clone()),
                    file: None,
                    jumps: None,
                    final_mass: None,
                    sup_mass: None,
                    warnings: Vec::new(),
                },
            });
        }
        levels.push(ManifestLevel {
            n: level.n,
            completed: level.runs.len() - level.failures(),
            failed: level.failures(),
            runs,
        });
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        config: cfg,
        failures: ensemble.failures(),
        levels,
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    std::fs::write(out.join("timing.json"), serde_json::to_string_pretty(&timing)?)?;
    Ok(())
}
