use serde::Serialize;

use super::ensemble::LevelRuns;
use super::stats::{mean_se, ols, LinearFit};

#[derive(Clone, Debug, Serialize)]
pub struct MomentOrder {
    pub p: u32,
    /// `E⟨X_t,1⟩^p` on the record grid.
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// Fitted `d/dt log E⟨X_t,1⟩^p`.
    pub slope: Option<f64>,
    /// Conservative standard error of the slope from the pointwise SEs.
    pub slope_se: Option<f64>,
    /// `p · growth_rate + 3·SE`.
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub n: u32,
    pub replications: usize,
    pub failures: usize,
    pub explosions: usize,
    pub times: Vec<f64>,
    pub orders: Vec<MomentOrder>,
    /// Max over replications of `sup_t ⟨X_t,1⟩`.
    pub max_sup_mass: f64,
    pub passed: bool,
}

/// Ensemble moments of the renormalized mass and an exponential-growth
/// check against `growth_rate`, the model's bound on `d/dt log E⟨ν_t,1⟩`.
pub fn moment_report(level: &LevelRuns, orders: &[u32], growth_rate: f64) -> MomentReport {
    let runs: Vec<_> = level.successes().collect();
    let explosions = level
        .runs
        .iter()
        .filter(|r| r.outcome.as_ref().is_err_and(|e| e.starts_with("jump count exceeded cap")))
        .count();
    let times = runs.first().map(|t| t.times.clone()).unwrap_or_default();
    let mass: Vec<&[f64]> = runs.iter().filter_map(|t| t.series("mass")).collect();
    let max_sup_mass = runs.iter().map(|t| t.sup_mass).fold(0.0, f64::max);

    let mut out = Vec::new();
    for &p in orders {
        let mut mean = Vec::with_capacity(times.len());
        let mut se = Vec::with_capacity(times.len());
        for j in 0..times.len() {
            let xs: Vec<f64> = mass.iter().filter_map(|s| s.get(j)).map(|m| m.powi(p as i32)).collect();
            let (m, s) = mean_se(&xs);
            mean.push(m);
            se.push(s);
        }
        let keep: Vec<usize> = (0..times.len()).filter(|&j| mean[j] > 0.0).collect();
        let xs: Vec<f64> = keep.iter().map(|&j| times[j]).collect();
        let ys: Vec<f64> = keep.iter().map(|&j| mean[j].ln()).collect();
        let fit = ols(&xs, &ys);
        let slope_se = fit.map(|_| {
            LinearFit::slope_weights(&xs)
                .iter()
                .zip(&keep)
                .map(|(c, &j)| c.abs() * if se[j].is_finite() { se[j] / mean[j] } else { 0.0 })
                .sum::<f64>()
        });
        let bound = f64::from(p) * growth_rate + 3.0 * slope_se.unwrap_or(0.0);
        let slope = fit.map(|f| f.slope);
        let passed = slope.is_none_or(|s| s <= bound + 1e-12);
        out.push(MomentOrder { p, mean, se, slope, slope_se, bound, passed });
    }
    MomentReport {
        n: level.n,
        replications: runs.len(),
        failures: level.failures(),
        explosions,
        times,
        passed: explosions == 0 && out.iter().all(|o| o.passed),
        orders: out,
        max_sup_mass,
    }
}
