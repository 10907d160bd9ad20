use rayon::prelude::*;
use serde::Serialize;

use super::ensemble::pool;
use super::stats::{mean_se, sample_variance};
use crate::engine::{martingale_probe_with_rng, ProbeResult, RunOptions};
use crate::error::Result;
use crate::measure::{AtomicMeasure, TestFunction};
use crate::model::ModelSpec;
use crate::rng::stream_rng;

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleReport {
    pub observable: String,
    pub replications: usize,
    pub failures: usize,
    pub mean: f64,
    pub se: f64,
    pub variance: f64,
    pub mean_predicted_qv: f64,
    /// `Var(M_T) / E⟨M⟩_T`; 1 when both vanish.
    pub variance_ratio: f64,
    pub mean_zero: bool,
    pub variance_match: bool,
    pub passed: bool,
}

/// Runs `replications` martingale probes for `f = ⟨·,h⟩` and tests
/// `E M_T = 0` (within 3·SE) and `Var M_T = E⟨M⟩_T` (ratio in [0.85, 1.15]).
#[allow(clippy::too_many_arguments)]
pub fn martingale_report(
    model: &ModelSpec,
    m0: &AtomicMeasure,
    horizon: f64,
    h: &TestFunction,
    replications: usize,
    seed: u64,
    opts: &RunOptions,
    workers: Option<usize>,
) -> Result<MartingaleReport> {
    let outcomes: Vec<Result<ProbeResult>> = pool(workers)?.install(|| {
        (0..replications)
            .into_par_iter()
            .map(|i| martingale_probe_with_rng(model, m0, horizon, h, &mut stream_rng(seed, i as u64), opts))
            .collect()
    });
    let probes: Vec<ProbeResult> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
    let ms: Vec<f64> = probes.iter().map(|p| p.martingale).collect();
    let qv: Vec<f64> = probes.iter().map(|p| p.predicted_qv).collect();
    let (mean, se) = mean_se(&ms);
    let variance = sample_variance(&ms, mean);
    let (mean_predicted_qv, _) = mean_se(&qv);
    let variance_ratio = if variance == 0.0 && mean_predicted_qv == 0.0 { 1.0 } else { variance / mean_predicted_qv };
    let mean_zero = mean.abs() <= 3.0 * se || (mean == 0.0 && se == 0.0);
    let variance_match = (0.85..=1.15).contains(&variance_ratio);
    Ok(MartingaleReport {
        observable: h.name().to_string(),
        replications: probes.len(),
        failures: outcomes.len() - probes.len(),
        mean,
        se,
        variance,
        mean_predicted_qv,
        variance_ratio,
        mean_zero,
        variance_match,
        passed: mean_zero && variance_match,
    })
}
