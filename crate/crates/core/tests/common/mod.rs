#![allow(dead_code)]

use sspm::engine::{sample_jump_time, ClockMode};
use sspm::harness::ExperimentConfig;
use sspm::rng::stream_rng;
use sspm::zoo::bell_anderson::{self, BellAndersonInitial, BellAndersonParams, SizeRate};
use sspm::zoo::sir::{self, SirParams};
use sspm::zoo::{build_bell_anderson, build_sir, ModelConfig, ModelKind};
use sspm::{AtomicMeasure, Individual, ModelSpec};

/// Frozen cells with constant death rate `d` and a death bound of `d_sup`,
/// so thinning rejects candidates. Division never fires below `2a`.
pub fn frozen_death(d: f64, d_sup: f64) -> BellAndersonParams {
    BellAndersonParams {
        g: SizeRate::Constant { value: 0.0 },
        b: SizeRate::Constant { value: 1.0 },
        d: SizeRate::Constant { value: d },
        d_sup: Some(d_sup),
        ..BellAndersonParams::default()
    }
}

/// `k` cells of size 1.2 under [`frozen_death`]: total rate `k·d`.
pub fn constant_rate_cells(k: usize, d: f64, d_sup: f64) -> (ModelSpec, AtomicMeasure) {
    let p = frozen_death(d, d_sup);
    let init = BellAndersonInitial { mass: None, sizes: vec![1.2; k] };
    (build_bell_anderson(&p, 1).unwrap(), bell_anderson::initial(&p, &init, 1).unwrap())
}

/// SIR with no susceptibles: total rate `γ·infected`, flow-invariant.
pub fn recovering_only(infected: usize, gamma: f64) -> (ModelSpec, AtomicMeasure) {
    let model = build_sir(&SirParams { beta: 3.0, gamma }, 1).unwrap();
    let mut m = AtomicMeasure::new();
    m.with_unit_atoms(Individual::pure(sir::I), infected);
    (model, m)
}

pub fn first_jump_times(model: &ModelSpec, m: &AtomicMeasure, mode: ClockMode, samples: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    (0..samples).map(|_| sample_jump_time(model, m, mode, &mut rng).unwrap().0).collect()
}

pub fn exp_cdf(rate: f64) -> impl Fn(f64) -> f64 {
    move |x| if x <= 0.0 { 0.0 } else { 1.0 - (-rate * x).exp() }
}

pub fn config(kind: ModelKind, params: serde_json::Value, initial: serde_json::Value) -> ExperimentConfig {
    let mut model = ModelConfig::new(kind, 100);
    model.params = params;
    model.initial = initial;
    ExperimentConfig::new(model)
}

/// Mean and standard error, computed independently of the harness.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Classical SIR right-hand side.
pub fn sir_rhs(beta: f64, gamma: f64, y: [f64; 3]) -> [f64; 3] {
    let inf = beta * y[0] * y[1];
    let rec = gamma * y[1];
    [-inf, inf - rec, rec]
}
