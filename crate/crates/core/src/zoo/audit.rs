//! Empirical audit of the structural assumptions a model declares.

use serde::Serialize;

use crate::error::Result;
use crate::flow::advance_measure;
use crate::measure::{deposit_tv, net_mass, AtomicMeasure, Individual};
use crate::model::ModelSpec;
use crate::rng::{uniform, SimRng};

const REL_TOL: f64 = 1e-9;
const SCALING_TOL: f64 = 1e-12;
/// Atoms probed per sampled state.
const PROBES: usize = 6;

#[derive(Clone, Debug, Serialize)]
pub struct AuditCheck {
    pub name: String,
    pub channel: Option<String>,
    pub passed: bool,
    /// Worst empirical value seen.
    pub value: f64,
    /// Declared bound it was compared against.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub model: String,
    pub trials: usize,
    pub levels: (u32, u32),
    pub checks: Vec<AuditCheck>,
    pub passed: bool,
}

impl AuditReport {
    pub fn check(&self, name: &str, channel: Option<&str>) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name && c.channel.as_deref() == channel)
    }

    pub fn failures(&self) -> Vec<&AuditCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

struct Tracker {
    value: f64,
    bound: f64,
    passed: bool,
}

impl Tracker {
    fn new(bound: f64) -> Self {
        Self { value: 0.0, bound, passed: true }
    }

    fn observe(&mut self, v: f64, ok: bool) {
        if v.is_nan() {
            self.passed = false;
            return;
        }
        self.value = self.value.max(v);
        self.passed &= ok;
    }

    fn finish(self, name: &str, channel: Option<&str>) -> AuditCheck {
        AuditCheck {
            name: name.to_string(),
            channel: channel.map(str::to_string),
            passed: self.passed,
            value: self.value,
            bound: self.bound,
        }
    }
}

fn probe_atoms(m: &AtomicMeasure, rng: &mut SimRng) -> Vec<usize> {
    if m.len() <= PROBES {
        return (0..m.len()).collect();
    }
    (0..PROBES).map(|_| ((uniform(rng) * m.len() as f64) as usize).min(m.len() - 1)).collect()
}

/// `m` with one atom removed or duplicated, and the TV distance moved.
fn perturb(m: &AtomicMeasure, rng: &mut SimRng) -> (AtomicMeasure, f64) {
    let k = ((uniform(rng) * m.len() as f64) as usize).min(m.len() - 1);
    let atom = m.atoms()[k];
    let kept = m.atoms().iter().enumerate().filter(|(i, _)| *i != k).map(|(_, a)| *a);
    let out = if uniform(rng) < 0.5 && m.len() > 1 {
        AtomicMeasure::from_atoms(kept)
    } else {
        AtomicMeasure::from_atoms(m.atoms().iter().copied().chain(std::iter::once(atom)))
    };
    (out.expect("atoms of an admissible measure"), atom.weight)
}

/// Samples `trials` states at the two scaling levels and checks every
/// declared constant of every channel. `family(n)` builds the model at level
/// `n`; `sampler(n, rng)` draws an admissible unscaled state `ν` at level `n`.
pub fn audit_assumptions(
    family: &dyn Fn(u32) -> Result<ModelSpec>,
    sampler: &dyn Fn(u32, &mut SimRng) -> Result<AtomicMeasure>,
    levels: (u32, u32),
    trials: usize,
    rng: &mut SimRng,
) -> Result<AuditReport> {
    let unit = family(1)?;
    let scaled = [family(levels.0)?, family(levels.1)?];
    let model = &scaled[0];
    let channels = model.channels.len();

    let mut tv: Vec<Tracker> = model.channels.iter().map(|c| Tracker::new(c.tv_bound())).collect();
    let mut monotone: Vec<Tracker> = model.channels.iter().map(|_| Tracker::new(0.0)).collect();
    let mut growth: Vec<Option<Tracker>> = model
        .channels
        .iter()
        .map(|c| {
            c.mass_increasing().then(|| {
                let mut t = Tracker::new(c.constants().growth.unwrap_or(f64::NAN));
                t.passed = c.constants().growth.is_some();
                t
            })
        })
        .collect();
    let mut lipschitz: Vec<Tracker> =
        model.channels.iter().map(|c| Tracker::new(c.constants().lipschitz)).collect();
    let mut sup: Vec<Tracker> = model.channels.iter().map(|_| Tracker::new(1.0)).collect();
    let mut bound: Vec<Tracker> = model.channels.iter().map(|_| Tracker::new(1.0)).collect();
    let mut quadratic = Tracker::new(f64::INFINITY);
    let mut scaling = Tracker::new(SCALING_TOL);

    for _ in 0..trials {
        let m = sampler(levels.0, rng)?;
        if m.is_empty() {
            continue;
        }
        let mass = m.total_mass();
        let probes = probe_atoms(&m, rng);
        let (m2, dist) = perturb(&m, rng);
        let q: f64 = model.total_rate(&m);
        quadratic.observe(q / (1.0 + mass + mass * mass), true);

        for (ci, c) in model.channels.iter().enumerate() {
            let cq = c.constants();
            for &k in &probes {
                let x = m.atoms()[k].individual;
                let a = c.rate(&m, &x);
                if a > 0.0 {
                    let d = c.make_deposits(&m, k, rng);
                    let v = deposit_tv(&d);
                    tv[ci].observe(v, v <= c.tv_bound() * (1.0 + REL_TOL));
                    let net = net_mass(&d);
                    monotone[ci].observe(net, c.mass_increasing() || net <= 1e-12);
                }
                let cap = cq.rate_sup.0 + cq.rate_sup.1 * mass;
                let ratio = if cap > 0.0 { a / cap } else if a > 0.0 { f64::INFINITY } else { 0.0 };
                sup[ci].observe(ratio, a <= cap * (1.0 + REL_TOL) + 1e-300);
                let diff = (a - c.rate(&m2, &x)).abs();
                lipschitz[ci].observe(diff / dist, diff <= cq.lipschitz * dist * (1.0 + REL_TOL) + 1e-12);
            }
            let qi = c.total_rate(&m);
            if let Some(t) = growth[ci].as_mut() {
                let fitted = qi / (1.0 + mass);
                let ok = fitted <= t.bound * (1.0 + REL_TOL);
                t.observe(fitted, ok);
            }
            let rb = c.rate_bound(&m);
            check_bound_along_flow(model, ci, &m, rb, &mut bound[ci]);
        }

        for (level, spec) in [levels.0, levels.1].into_iter().zip(&scaled) {
            let nu = if level == levels.0 { m.clone() } else { sampler(level, rng)? };
            if nu.is_empty() {
                continue;
            }
            let hat = nu.scaled(1.0 / f64::from(level));
            for &k in &probe_atoms(&nu, rng) {
                let x: Individual = nu.atoms()[k].individual;
                for ci in 0..channels {
                    let big = spec.channels[ci].rate(&nu, &x);
                    let small = unit.channels[ci].rate(&hat, &x);
                    let err = (big - small).abs() / small.abs().max(1.0);
                    scaling.observe(err, err <= SCALING_TOL);
                }
            }
        }
    }

    let mut checks = Vec::new();
    for (ci, c) in model.channels.iter().enumerate() {
        let name = Some(c.name());
        let mut it = std::mem::replace(&mut tv[ci], Tracker::new(0.0));
        checks.push(it.finish("tv_bound", name));
        it = std::mem::replace(&mut monotone[ci], Tracker::new(0.0));
        checks.push(it.finish("mass_increasing", name));
        if let Some(t) = growth[ci].take() {
            checks.push(t.finish("growth", name));
        }
        it = std::mem::replace(&mut lipschitz[ci], Tracker::new(0.0));
        checks.push(it.finish("lipschitz", name));
        it = std::mem::replace(&mut sup[ci], Tracker::new(0.0));
        checks.push(it.finish("rate_sup", name));
        it = std::mem::replace(&mut bound[ci], Tracker::new(0.0));
        checks.push(it.finish("rate_bound", name));
    }
    checks.push(quadratic.finish("quadratic_rate", None));
    checks.push(scaling.finish("scaling_identity", None));
    let passed = checks.iter().all(|c| c.passed);
    Ok(AuditReport { model: model.name.clone(), trials, levels, checks, passed })
}

/// `q_i(φ_s m) / rate_bound(m)` on a grid of `s ∈ [0, 0.5]`.
fn check_bound_along_flow(model: &ModelSpec, ci: usize, m: &AtomicMeasure, rb: f64, t: &mut Tracker) {
    let c = &model.channels[ci];
    let mut state = m.clone();
    for step in 0..=5 {
        if step > 0 {
            if model.flow.is_frozen() {
                break;
            }
            match advance_measure(&model.flow, &state, 0.1) {
                Ok(next) => state = next,
                Err(_) => {
                    t.observe(f64::INFINITY, false);
                    return;
                }
            }
        }
        let q = c.total_rate(&state);
        let ratio = if rb > 0.0 { q / rb } else if q > 0.0 { f64::INFINITY } else { 0.0 };
        t.observe(ratio, ratio <= 1.0 + REL_TOL);
    }
}
