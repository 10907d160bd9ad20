//! Basic stochastic SIR on three frozen compartments.

use serde::{Deserialize, Serialize};

use super::{count, pick_in_compartment, require_nonneg, require_positive};
use crate::error::Result;
use crate::flow::{CompartmentSpec, FlowRule, FlowSpec, StepControl};
use crate::measure::{AtomicMeasure, Deposit, Individual, TestFunction};
use crate::model::{Channel, ChannelConstants, ModelSpec};
use crate::rng::{uniform, SimRng};

pub const S: u8 = 0;
pub const I: u8 = 1;
pub const R: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SirParams {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for SirParams {
    fn default() -> Self {
        Self { beta: 3.0, gamma: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SirInitial {
    pub s0: f64,
    pub i0: f64,
    pub r0: f64,
}

impl Default for SirInitial {
    fn default() -> Self {
        Self { s0: 0.99, i0: 0.01, r0: 0.0 }
    }
}

pub fn initial(init: &SirInitial, n: u32) -> Result<AtomicMeasure> {
    require_nonneg("s0", init.s0)?;
    require_nonneg("i0", init.i0)?;
    require_nonneg("r0", init.r0)?;
    let mut m = AtomicMeasure::new();
    m.with_unit_atoms(Individual::pure(S), count(init.s0, n))
        .with_unit_atoms(Individual::pure(I), count(init.i0, n))
        .with_unit_atoms(Individual::pure(R), count(init.r0, n));
    Ok(m)
}

pub fn random_state(n: u32, rng: &mut SimRng) -> AtomicMeasure {
    let size = f64::from(n) * (0.5 + 1.5 * uniform(rng));
    let (a, b) = (uniform(rng), uniform(rng));
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mut m = AtomicMeasure::new();
    m.with_unit_atoms(Individual::pure(S), (lo * size) as usize)
        .with_unit_atoms(Individual::pure(I), ((hi - lo) * size) as usize)
        .with_unit_atoms(Individual::pure(R), ((1.0 - hi) * size) as usize);
    m
}

/// Drift and quadratic rate of a pure-compartment move `from → to` firing at
/// total rate `total`.
fn move_moments(total: f64, from: u8, to: u8, h: &TestFunction) -> (f64, f64) {
    let d = h.eval(&Individual::pure(to)) - h.eval(&Individual::pure(from));
    (total * d, total * d * d)
}

/// Recovery `I → R` at per-capita rate γ.
pub struct Recovery {
    pub gamma: f64,
}

impl Channel for Recovery {
    fn name(&self) -> &str {
        "recovery"
    }

    fn rate(&self, _m: &AtomicMeasure, x: &Individual) -> f64 {
        if x.compartment() == I {
            self.gamma
        } else {
            0.0
        }
    }

    fn total_rate(&self, m: &AtomicMeasure) -> f64 {
        self.gamma * m.compartment_mass(I)
    }

    fn select_atom(&self, m: &AtomicMeasure, _total: f64, rng: &mut SimRng) -> usize {
        pick_in_compartment(m, I, rng)
    }

    fn make_deposits(&self, _m: &AtomicMeasure, atom: usize, _rng: &mut SimRng) -> Vec<Deposit> {
        vec![Deposit::remove(atom), Deposit::add(Individual::pure(R))]
    }

    fn jump_moments(&self, m: &AtomicMeasure, h: &TestFunction) -> (f64, f64) {
        move_moments(self.total_rate(m), I, R, h)
    }

    fn constant_along_flow(&self) -> bool {
        true
    }

    fn rate_bound(&self, m: &AtomicMeasure) -> f64 {
        self.total_rate(m)
    }

    fn tv_bound(&self) -> f64 {
        2.0
    }

    fn mass_increasing(&self) -> bool {
        false
    }

    fn constants(&self) -> ChannelConstants {
        ChannelConstants { growth: None, lipschitz: 0.0, rate_sup: (self.gamma, 0.0) }
    }
}

/// Infection `S → I` at per-capita rate `(β/n)·I(m)`.
pub struct Infection {
    /// Already divided by the scaling level.
    pub beta_scaled: f64,
}

impl Channel for Infection {
    fn name(&self) -> &str {
        "infection"
    }

    fn rate(&self, m: &AtomicMeasure, x: &Individual) -> f64 {
        if x.compartment() == S {
            self.beta_scaled * m.compartment_mass(I)
        } else {
            0.0
        }
    }

    fn total_rate(&self, m: &AtomicMeasure) -> f64 {
        self.beta_scaled * m.compartment_mass(I) * m.compartment_mass(S)
    }

    fn select_atom(&self, m: &AtomicMeasure, _total: f64, rng: &mut SimRng) -> usize {
        pick_in_compartment(m, S, rng)
    }

    fn make_deposits(&self, _m: &AtomicMeasure, atom: usize, _rng: &mut SimRng) -> Vec<Deposit> {
        vec![Deposit::remove(atom), Deposit::add(Individual::pure(I))]
    }

    fn jump_moments(&self, m: &AtomicMeasure, h: &TestFunction) -> (f64, f64) {
        move_moments(self.total_rate(m), S, I, h)
    }

    fn constant_along_flow(&self) -> bool {
        true
    }

    fn rate_bound(&self, m: &AtomicMeasure) -> f64 {
        self.total_rate(m)
    }

    fn tv_bound(&self) -> f64 {
        2.0
    }

    fn mass_increasing(&self) -> bool {
        false
    }

    fn constants(&self) -> ChannelConstants {
        ChannelConstants { growth: None, lipschitz: self.beta_scaled, rate_sup: (0.0, self.beta_scaled) }
    }
}

pub(crate) fn compartments() -> Vec<CompartmentSpec> {
    vec![CompartmentSpec::pure("S"), CompartmentSpec::pure("I"), CompartmentSpec::pure("R")]
}

pub(crate) fn compartment_panel() -> Vec<TestFunction> {
    vec![
        TestFunction::indicator("S", S),
        TestFunction::indicator("I", I),
        TestFunction::indicator("R", R),
        TestFunction::one(),
    ]
}

/// SIR at scaling level `n`: `γ_n = γ`, `β_n = β/n`.
pub fn build_sir(params: &SirParams, n: u32) -> Result<ModelSpec> {
    build_sir_with_infection_scale(params, n, f64::from(n.max(1)))
}

/// SIR whose infection rate is divided by `divisor` instead of `n`; used to
/// construct deliberately mis-scaled models.
pub fn build_sir_with_infection_scale(params: &SirParams, n: u32, divisor: f64) -> Result<ModelSpec> {
    require_positive("beta", params.beta)?;
    require_positive("gamma", params.gamma)?;
    if n == 0 {
        return Err(crate::error::Error::InvalidParam("n must be at least 1".into()));
    }
    let flow = FlowSpec::new(compartments(), vec![FlowRule::Frozen; 3], StepControl::default())?;
    Ok(ModelSpec {
        name: "sir".into(),
        flow,
        channels: vec![
            Box::new(Recovery { gamma: params.gamma }),
            Box::new(Infection { beta_scaled: params.beta / divisor }),
        ],
        scale: n,
        observables: compartment_panel(),
        params: serde_json::to_value(params).expect("serializable params"),
        size_warning: None,
        mass_growth_rate: 0.0,
    })
}
