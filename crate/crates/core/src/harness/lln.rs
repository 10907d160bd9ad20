use serde::Serialize;

use super::ensemble::Ensemble;
use super::stats::{mean_se, ols};
use crate::error::{Error, Result};
use crate::limit::LimitSolution;
use crate::measure::TestFunction;

#[derive(Clone, Debug, Serialize)]
pub struct LevelError {
    pub n: u32,
    /// Mean over replications of `sup_t max_h |⟨X^n_t,h⟩ − ⟨ξ_t,h⟩|`.
    pub mean: f64,
    pub se: f64,
    pub replications: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub observables: Vec<String>,
    pub levels: Vec<LevelError>,
    /// Least-squares slope of `log err` against `log n`.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub slope_ci: Option<(f64, f64)>,
    pub window: (f64, f64),
    /// Every level matched the limit exactly.
    pub exact_match: bool,
    pub strictly_decreasing: bool,
    /// `err(n)` non-increasing up to `2·SE`.
    pub monotone_within_noise: bool,
    pub passed: bool,
}

/// Sup-over-grid panel distance between each path and the limit, averaged
/// per level, with a log–log slope fit across levels.
pub fn lln_report(ensemble: &Ensemble, limit: &LimitSolution, panel: &[TestFunction]) -> Result<ConvergenceReport> {
    if ensemble.levels.len() < 3 {
        return Err(Error::InsufficientLevels(ensemble.levels.len()));
    }
    let window = ensemble.config.slope_window;
    let mut cache: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut levels = Vec::new();
    for level in &ensemble.levels {
        let mut errs = Vec::new();
        for traj in level.successes() {
            let mut sup: f64 = 0.0;
            for (k, name) in traj.names.iter().enumerate() {
                let Some(h) = panel.iter().position(|h| h.name() == name) else { continue };
                for (j, &t) in traj.times.iter().enumerate() {
                    let target = match cache.iter().find(|(s, _)| *s == t) {
                        Some((_, v)) => v[h],
                        None => {
                            let v: Vec<f64> = panel.iter().map(|g| limit.pair(t, g)).collect();
                            let out = v[h];
                            cache.push((t, v));
                            out
                        }
                    };
                    sup = sup.max((traj.values[k][j] - target).abs());
                }
            }
            errs.push(sup);
        }
        let (mean, se) = mean_se(&errs);
        levels.push(LevelError { n: level.n, mean, se, replications: errs.len(), failures: level.failures() });
    }

    let exact_match = levels.iter().all(|l| l.mean == 0.0);
    let strictly_decreasing = levels.windows(2).all(|w| w[1].mean < w[0].mean);
    let monotone_within_noise = levels.windows(2).all(|w| w[1].mean <= w[0].mean + 2.0 * w[1].se.max(w[0].se));
    let usable: Vec<&LevelError> = levels.iter().filter(|l| l.mean > 0.0 && l.mean.is_finite()).collect();
    let fit = if exact_match || usable.len() < 3 {
        None
    } else {
        let xs: Vec<f64> = usable.iter().map(|l| f64::from(l.n).ln()).collect();
        let ys: Vec<f64> = usable.iter().map(|l| l.mean.ln()).collect();
        ols(&xs, &ys)
    };
    let slope = fit.map(|f| f.slope);
    let passed = exact_match
        || (strictly_decreasing && slope.is_some_and(|s| s >= window.0 && s <= window.1));
    Ok(ConvergenceReport {
        observables: panel.iter().map(|h| h.name().to_string()).collect(),
        levels,
        slope,
        slope_se: fit.map(|f| f.slope_se),
        slope_ci: fit.and_then(|f| f.slope_ci(0.95)),
        window,
        exact_match,
        strictly_decreasing,
        monotone_within_noise,
        passed,
    })
}
