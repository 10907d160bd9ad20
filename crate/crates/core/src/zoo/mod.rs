//! The four shipped models, their JSON configuration, and the assumption
//! audit.

pub mod age_sir;
pub mod audit;
pub mod bell_anderson;
pub mod host_pathogen;
pub mod sir;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::StepControl;
use crate::measure::{AtomicMeasure, Individual, TestFunction};
use crate::model::ModelSpec;
use crate::rng::{uniform, SimRng};

pub use age_sir::{build_age_sir, AgeRate, AgeSirParams};
pub use audit::{audit_assumptions, AuditReport};
pub use bell_anderson::{build_bell_anderson, BellAndersonParams, SizeRate};
pub use host_pathogen::{build_host_pathogen, HostPathogenParams, LogNormalJitter, MutationKernel};
pub use sir::{build_sir, SirParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sir,
    AgeSir,
    HostPathogen,
    BellAnderson,
}

/// `{"model": ..., "params": {...}, "n": int, "initial": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default = "default_n")]
    pub n: u32,
    #[serde(default)]
    pub initial: serde_json::Value,
    #[serde(default)]
    pub step: StepControl,
}

fn default_n() -> u32 {
    100
}

fn parse<T: for<'de> Deserialize<'de> + Default>(v: &serde_json::Value) -> Result<T> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))
}

impl ModelConfig {
    pub fn new(model: ModelKind, n: u32) -> Self {
        Self {
            model,
            params: serde_json::Value::Null,
            n,
            initial: serde_json::Value::Null,
            step: StepControl::default(),
        }
    }

    /// The model at scaling level `n`.
    pub fn build(&self, n: u32) -> Result<ModelSpec> {
        let model = match self.model {
            ModelKind::Sir => build_sir(&parse::<SirParams>(&self.params)?, n)?,
            ModelKind::AgeSir => build_age_sir(&parse::<AgeSirParams>(&self.params)?, n)?,
            ModelKind::HostPathogen => build_host_pathogen(&parse::<HostPathogenParams>(&self.params)?, n)?,
            ModelKind::BellAnderson => build_bell_anderson(&parse::<BellAndersonParams>(&self.params)?, n)?,
        };
        Ok(model.with_step(self.step))
    }

    /// The initial measure `ν_0^n`, made of unit atoms.
    pub fn initial(&self, n: u32) -> Result<AtomicMeasure> {
        match self.model {
            ModelKind::Sir => sir::initial(&parse(&self.initial)?, n),
            ModelKind::AgeSir => age_sir::initial(&parse(&self.initial)?, n),
            ModelKind::HostPathogen => host_pathogen::initial(&parse(&self.initial)?, n),
            ModelKind::BellAnderson => {
                let p: BellAndersonParams = parse(&self.params)?;
                bell_anderson::initial(&p, &parse(&self.initial)?, n)
            }
        }
    }

    /// A random admissible state at level `n` for audits.
    pub fn random_state(&self, n: u32, rng: &mut SimRng) -> Result<AtomicMeasure> {
        Ok(match self.model {
            ModelKind::Sir => sir::random_state(n, rng),
            ModelKind::AgeSir => age_sir::random_state(n, rng),
            ModelKind::HostPathogen => host_pathogen::random_state(n, rng),
            ModelKind::BellAnderson => bell_anderson::random_state(&parse(&self.params)?, n, rng),
        })
    }
}

impl ModelSpec {
    pub fn with_step(mut self, step: StepControl) -> Self {
        self.flow = self.flow.with_step(step);
        self
    }
}

/// Index into `members` drawn with probability proportional to weight.
pub(crate) fn pick_in_compartment(m: &AtomicMeasure, c: u8, rng: &mut SimRng) -> usize {
    let members = m.compartment_atoms(c);
    debug_assert!(!members.is_empty());
    if m.has_unit_weights() {
        let k = ((uniform(rng) * members.len() as f64) as usize).min(members.len() - 1);
        return members[k];
    }
    let target = uniform(rng) * m.compartment_mass(c);
    let mut acc = 0.0;
    for &i in members {
        acc += m.atoms()[i].weight;
        if acc > target {
            return i;
        }
    }
    *members.last().expect("non-empty compartment")
}

/// Uniformly weighted pick over all atoms.
pub(crate) fn pick_any(m: &AtomicMeasure, rng: &mut SimRng) -> usize {
    if m.has_unit_weights() {
        return ((uniform(rng) * m.len() as f64) as usize).min(m.len() - 1);
    }
    let target = uniform(rng) * m.total_mass();
    let mut acc = 0.0;
    for (i, a) in m.atoms().iter().enumerate() {
        acc += a.weight;
        if acc > target {
            return i;
        }
    }
    m.len() - 1
}

/// `exp(−(y − center)² / (2 width²))` on coordinate `coord` of compartment
/// `c`, with flow derivative `h'(y)·velocity(x)`.
pub(crate) fn bump<V>(name: &str, c: u8, coord: usize, center: f64, width: f64, velocity: V) -> TestFunction
where
    V: Fn(&Individual) -> f64 + Send + Sync + 'static,
{
    let h = move |x: &Individual| {
        if x.compartment() != c {
            return 0.0;
        }
        let z = (x.coord(coord) - center) / width;
        (-0.5 * z * z).exp()
    };
    TestFunction::new(name, 1.0, h).with_flow_derivative(move |x| {
        if x.compartment() != c {
            return 0.0;
        }
        let z = (x.coord(coord) - center) / width;
        -z / width * (-0.5 * z * z).exp() * velocity(x)
    })
}

/// `y^power · 1_{c}` on coordinate `coord`, with flow derivative.
pub(crate) fn trait_moment<V>(name: &str, c: u8, coord: usize, power: i32, velocity: V) -> TestFunction
where
    V: Fn(&Individual) -> f64 + Send + Sync + 'static,
{
    TestFunction::new(name, f64::INFINITY, move |x| {
        if x.compartment() == c {
            x.coord(coord).powi(power)
        } else {
            0.0
        }
    })
    .with_flow_derivative(move |x| {
        if x.compartment() == c {
            f64::from(power) * x.coord(coord).powi(power - 1) * velocity(x)
        } else {
            0.0
        }
    })
}

pub(crate) fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("{name} must be positive, got {v}")))
    }
}

pub(crate) fn require_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("{name} must be nonnegative, got {v}")))
    }
}

/// Count of unit atoms representing fraction `f` of a population of size `n`.
pub(crate) fn count(f: f64, n: u32) -> usize {
    (f * f64::from(n)).round().max(0.0) as usize
}
