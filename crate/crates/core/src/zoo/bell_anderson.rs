//! Bell–Anderson growth–fragmentation cell model.
//!
//! Cells grow at speed `g(x)`, die at rate `d(x)` and split into two cells of
//! size `x/2` at rate `b(x)`. Cells smaller than `2a` never divide.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{bump, count, pick_any, require_positive, trait_moment};
use crate::error::{Error, Result};
use crate::flow::{CompartmentSpec, FlowRule, FlowSpec, StepControl};
use crate::measure::{AtomicMeasure, Deposit, Individual, TestFunction};
use crate::model::{Channel, ChannelConstants, ModelSpec, SizeWarning};
use crate::rng::{uniform, SimRng};

pub const CELL: u8 = 0;

/// A nonnegative function of cell size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeRate {
    Constant { value: f64 },
    /// `intercept + slope · x`.
    Linear { slope: f64, intercept: f64 },
    /// `value · 1_{x ≥ threshold}`.
    Step { value: f64, threshold: f64 },
}

impl SizeRate {
    pub const ZERO: SizeRate = SizeRate::Constant { value: 0.0 };

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SizeRate::Constant { value } => value,
            SizeRate::Linear { slope, intercept } => intercept + slope * x,
            SizeRate::Step { value, threshold } => {
                if x >= threshold {
                    value
                } else {
                    0.0
                }
            }
        }
    }

    /// Supremum over `[lo, hi]`.
    pub fn sup_on(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            SizeRate::Constant { value } => value,
            SizeRate::Linear { .. } => self.eval(lo).max(self.eval(hi)),
            SizeRate::Step { value, threshold } => {
                if hi >= threshold {
                    value.max(0.0)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self, SizeRate::Constant { value } if value == 0.0)
    }

    fn validate(&self, name: &str, lo: f64, hi: f64) -> Result<()> {
        let finite = match *self {
            SizeRate::Constant { value } => value.is_finite(),
            SizeRate::Linear { slope, intercept } => slope.is_finite() && intercept.is_finite(),
            SizeRate::Step { value, threshold } => value.is_finite() && threshold.is_finite(),
        };
        let nonneg = match *self {
            SizeRate::Step { value, .. } => value >= 0.0,
            _ => self.eval(lo) >= 0.0 && self.eval(hi) >= 0.0,
        };
        if finite && nonneg {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("{name}: {self:?} must be finite and nonnegative on [{lo}, {hi}]")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BellAndersonParams {
    pub a_min: f64,
    pub g: SizeRate,
    /// Division rate before the `x ≥ 2a` cutoff is applied.
    pub b: SizeRate,
    pub d: SizeRate,
    /// Upper end of the working size range used for rate suprema.
    pub x_sup: f64,
    /// Overrides for `sup b` and `sup d`.
    pub b_sup: Option<f64>,
    pub d_sup: Option<f64>,
    pub warn_fraction: f64,
}

impl Default for BellAndersonParams {
    fn default() -> Self {
        Self {
            a_min: 1.0,
            g: SizeRate::Linear { slope: 1.0, intercept: 0.0 },
            b: SizeRate::Constant { value: 1.0 },
            d: SizeRate::Constant { value: 0.1 },
            x_sup: 64.0,
            b_sup: None,
            d_sup: None,
            warn_fraction: 0.01,
        }
    }
}

impl BellAndersonParams {
    /// Division rate including the `x ≥ 2a` cutoff.
    #[inline]
    pub fn division_rate(&self, x: f64) -> f64 {
        if x >= 2.0 * self.a_min {
            self.b.eval(x)
        } else {
            0.0
        }
    }

    pub fn b_sup(&self) -> f64 {
        self.b_sup.unwrap_or_else(|| self.b.sup_on(2.0 * self.a_min, self.x_sup))
    }

    pub fn d_sup(&self) -> f64 {
        self.d_sup.unwrap_or_else(|| self.d.sup_on(self.a_min, self.x_sup))
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("a_min", self.a_min)?;
        if !(self.x_sup > 2.0 * self.a_min) {
            return Err(Error::InvalidParam(format!("x_sup must exceed 2 a_min, got {}", self.x_sup)));
        }
        self.g.validate("g", self.a_min, self.x_sup)?;
        self.b.validate("b", 2.0 * self.a_min, self.x_sup)?;
        self.d.validate("d", self.a_min, self.x_sup)?;
        for (name, v) in [("b_sup", self.b_sup), ("d_sup", self.d_sup)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParam(format!("{name} must be nonnegative, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn flow(&self) -> Result<FlowSpec> {
        let rule = if self.g.is_zero() {
            FlowRule::Frozen
        } else if let SizeRate::Linear { slope, intercept: 0.0 } = self.g {
            FlowRule::Exponential { coord: 0, rate: slope }
        } else {
            let g = self.g;
            FlowRule::VectorField(Arc::new(move |y: &[f64; 2]| [g.eval(y[0]), 0.0]))
        };
        FlowSpec::new(
            vec![CompartmentSpec::with_trait("cell", 1, [self.a_min, 0.0], None)],
            vec![rule],
            StepControl::default(),
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BellAndersonInitial {
    /// Mass per unit of `n`, spread evenly over `[a, 2a]`; defaults to 1.
    pub mass: Option<f64>,
    /// Explicit unit-weight cell sizes; overrides `mass`.
    pub sizes: Vec<f64>,
}

impl BellAndersonInitial {
    pub fn mass(&self) -> f64 {
        self.mass.unwrap_or(1.0)
    }
}

/// Initial cells, which must lie in `[a, 2a]`.
pub fn initial(params: &BellAndersonParams, init: &BellAndersonInitial, n: u32) -> Result<AtomicMeasure> {
    params.validate()?;
    let a = params.a_min;
    let sizes: Vec<f64> = if init.sizes.is_empty() {
        let k = count(init.mass(), n);
        (0..k).map(|i| a * (1.0 + (i as f64 + 0.5) / k as f64)).collect()
    } else {
        init.sizes.clone()
    };
    let mut m = AtomicMeasure::new();
    for x in sizes {
        if !(x >= a && x <= 2.0 * a) {
            return Err(Error::InvalidParam(format!("initial cell size {x} outside [{a}, {}]", 2.0 * a)));
        }
        m.with_unit_atoms(Individual::scalar(CELL, x), 1);
    }
    Ok(m)
}

/// Density on `[a, 2a]` matching [`initial`] in the large-`n` limit.
pub fn initial_density(params: &BellAndersonParams, init: &BellAndersonInitial) -> impl Fn(f64) -> f64 {
    let a = params.a_min;
    let mass = init.mass();
    move |x| if x >= a && x <= 2.0 * a { mass / a } else { 0.0 }
}

pub fn random_state(params: &BellAndersonParams, n: u32, rng: &mut SimRng) -> AtomicMeasure {
    let size = (f64::from(n) * (0.5 + 1.5 * uniform(rng))) as usize;
    let a = params.a_min;
    let mut m = AtomicMeasure::new();
    for _ in 0..size.max(1) {
        m.with_unit_atoms(Individual::scalar(CELL, a * (1.0 + 3.0 * uniform(rng))), 1);
    }
    m
}

pub struct Death {
    pub d: SizeRate,
    pub d_sup: f64,
}

impl Channel for Death {
    fn name(&self) -> &str {
        "death"
    }

    fn rate(&self, _m: &AtomicMeasure, x: &Individual) -> f64 {
        self.d.eval(x.coord(0))
    }

    fn total_rate(&self, m: &AtomicMeasure) -> f64 {
        match self.d {
            SizeRate::Constant { value } => value * m.total_mass(),
            _ => m.atoms().iter().map(|a| a.weight * self.d.eval(a.individual.coord(0))).sum(),
        }
    }

    fn select_atom(&self, m: &AtomicMeasure, total: f64, rng: &mut SimRng) -> usize {
        if matches!(self.d, SizeRate::Constant { .. }) {
            return pick_any(m, rng);
        }
        let target = uniform(rng) * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, a) in m.atoms().iter().enumerate() {
            let r = a.weight * self.d.eval(a.individual.coord(0));
            if r > 0.0 {
                acc += r;
                last = i;
                if acc > target {
                    return i;
                }
            }
        }
        last
    }

    fn make_deposits(&self, _m: &AtomicMeasure, atom: usize, _rng: &mut SimRng) -> Vec<Deposit> {
        vec![Deposit::remove(atom)]
    }

    fn constant_along_flow(&self) -> bool {
        matches!(self.d, SizeRate::Constant { .. })
    }

    fn rate_bound(&self, m: &AtomicMeasure) -> f64 {
        self.d_sup * m.total_mass()
    }

    fn tv_bound(&self) -> f64 {
        1.0
    }

    fn mass_increasing(&self) -> bool {
        false
    }

    fn constants(&self) -> ChannelConstants {
        ChannelConstants { growth: None, lipschitz: 0.0, rate_sup: (self.d_sup, 0.0) }
    }
}

pub struct Division {
    pub params: BellAndersonParams,
    pub b_sup: f64,
}

impl Channel for Division {
    fn name(&self) -> &str {
        "division"
    }

    fn rate(&self, _m: &AtomicMeasure, x: &Individual) -> f64 {
        self.params.division_rate(x.coord(0))
    }

    fn make_deposits(&self, m: &AtomicMeasure, atom: usize, _rng: &mut SimRng) -> Vec<Deposit> {
        let half = Individual::scalar(CELL, 0.5 * m.atoms()[atom].individual.coord(0));
        vec![Deposit::remove(atom), Deposit::add(half), Deposit::add(half)]
    }

    fn constant_along_flow(&self) -> bool {
        false
    }

    fn rate_bound(&self, m: &AtomicMeasure) -> f64 {
        self.b_sup * m.total_mass()
    }

    fn tv_bound(&self) -> f64 {
        3.0
    }

    fn mass_increasing(&self) -> bool {
        true
    }

    fn constants(&self) -> ChannelConstants {
        ChannelConstants { growth: Some(self.b_sup), lipschitz: 0.0, rate_sup: (self.b_sup, 0.0) }
    }
}

pub fn build_bell_anderson(params: &BellAndersonParams, n: u32) -> Result<ModelSpec> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParam("n must be at least 1".into()));
    }
    let g = params.g;
    let v = move |x: &Individual| g.eval(x.coord(0));
    let observables = vec![
        TestFunction::one(),
        trait_moment("size_mean", CELL, 0, 1, v),
        trait_moment("size_sq", CELL, 0, 2, v),
        bump("size_bump_1.5", CELL, 0, 1.5, 0.5, v),
        bump("size_bump_3", CELL, 0, 3.0, 0.5, v),
    ];
    let b_sup = params.b_sup();
    Ok(ModelSpec {
        name: "bell_anderson".into(),
        flow: params.flow()?,
        channels: vec![
            Box::new(Death { d: params.d, d_sup: params.d_sup() }),
            Box::new(Division { params: *params, b_sup }),
        ],
        scale: n,
        observables,
        params: serde_json::to_value(params).expect("serializable params"),
        size_warning: Some(SizeWarning {
            compartment: CELL,
            coord: 0,
            threshold: 4.0 * params.a_min,
            fraction: params.warn_fraction,
        }),
        mass_growth_rate: b_sup,
    })
}
