//! Deterministic inter-jump dynamics.
//!
//! Each compartment evolves under one [`FlowRule`]. Pure compartments are
//! frozen, age-like traits translate at unit speed, and general traits follow
//! a vector field integrated with fixed-substep RK4.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{AtomicMeasure, Individual, TestFunction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// Largest RK4 substep, in time units.
    pub max_h: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { max_h: 1e-3 }
    }
}

pub type VectorField = Arc<dyn Fn(&[f64; 2]) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
pub enum FlowRule {
    /// `φ_t = id`.
    Frozen,
    /// `φ_t(x) = x + t·e_k`.
    Translate(usize),
    /// `φ_t(x) = x·e^{rate·t}` on coordinate `coord`, solved exactly.
    Exponential { coord: usize, rate: f64 },
    /// Flow of `ẋ = F(x)`.
    VectorField(VectorField),
}

impl fmt::Debug for FlowRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowRule::Frozen => write!(f, "Frozen"),
            FlowRule::Translate(k) => write!(f, "Translate({k})"),
            FlowRule::Exponential { coord, rate } => write!(f, "Exponential({coord}, {rate})"),
            FlowRule::VectorField(_) => write!(f, "VectorField"),
        }
    }
}

/// A compartment of the state space: its trait dimension and domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompartmentSpec {
    pub name: String,
    pub dim: usize,
    /// Lower bound of each trait coordinate.
    pub lower: [f64; 2],
    /// When set, the domain is open at `lower` and coordinates in
    /// `(lower, floor)` are lifted to `floor`.
    pub floor: Option<f64>,
}

impl CompartmentSpec {
    pub fn pure(name: &str) -> Self {
        Self { name: name.to_string(), dim: 0, lower: [0.0; 2], floor: None }
    }

    pub fn with_trait(name: &str, dim: usize, lower: [f64; 2], floor: Option<f64>) -> Self {
        Self { name: name.to_string(), dim, lower, floor }
    }

    /// Lifts coordinates below the floor; reports the first coordinate that
    /// is outside the domain.
    fn enforce(&self, coords: &mut [f64]) -> std::result::Result<(), (usize, f64)> {
        for (k, v) in coords.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err((k, *v));
            }
            match self.floor {
                Some(f) => {
                    if *v <= self.lower[k] {
                        return Err((k, *v));
                    }
                    if *v < f {
                        *v = f;
                    }
                }
                None => {
                    if *v < self.lower[k] - 1e-12 {
                        return Err((k, *v));
                    }
                }
            }
        }
        Ok(())
    }

    fn contains(&self, coords: &[f64]) -> bool {
        coords.iter().enumerate().all(|(k, v)| {
            v.is_finite()
                && match self.floor {
                    Some(_) => *v > self.lower[k],
                    None => *v >= self.lower[k],
                }
        })
    }
}

/// Per-compartment flow rules plus the integrator step control.
#[derive(Clone, Debug)]
pub struct FlowSpec {
    compartments: Vec<CompartmentSpec>,
    rules: Vec<FlowRule>,
    step: StepControl,
}

impl FlowSpec {
    pub fn new(compartments: Vec<CompartmentSpec>, rules: Vec<FlowRule>, step: StepControl) -> Result<Self> {
        if compartments.len() != rules.len() {
            return Err(Error::InvalidParam("one flow rule per compartment required".into()));
        }
        for (c, r) in compartments.iter().zip(&rules) {
            let ok = match r {
                FlowRule::Frozen => true,
                FlowRule::Translate(k) => *k < c.dim,
                FlowRule::Exponential { coord, rate } => *coord < c.dim && rate.is_finite(),
                FlowRule::VectorField(_) => c.dim > 0,
            };
            if !ok || c.dim > 2 {
                return Err(Error::InvalidParam(format!("flow rule {r:?} incompatible with compartment {}", c.name)));
            }
        }
        if !(step.max_h > 0.0) {
            return Err(Error::InvalidParam("max_h must be positive".into()));
        }
        Ok(Self { compartments, rules, step })
    }

    pub fn compartments(&self) -> &[CompartmentSpec] {
        &self.compartments
    }

    pub fn rule(&self, c: u8) -> &FlowRule {
        &self.rules[c as usize]
    }

    pub fn step(&self) -> StepControl {
        self.step
    }

    pub fn with_step(mut self, step: StepControl) -> Self {
        self.step = step;
        self
    }

    /// True when every compartment is frozen.
    pub fn is_frozen(&self) -> bool {
        self.rules.iter().all(|r| matches!(r, FlowRule::Frozen))
    }

    /// Checks trait dimension and domain membership.
    pub fn validate(&self, x: &Individual) -> Result<()> {
        let Some(spec) = self.compartments.get(x.compartment() as usize) else {
            return Err(Error::InvalidIndividual(format!("unknown compartment {}", x.compartment())));
        };
        if spec.dim != x.dim() {
            return Err(Error::InvalidIndividual(format!(
                "compartment {} expects {} trait coordinates, got {}",
                spec.name,
                spec.dim,
                x.dim()
            )));
        }
        if !spec.contains(x.traits()) {
            return Err(Error::InvalidIndividual(format!("{x:?} outside the domain of {}", spec.name)));
        }
        Ok(())
    }

    /// Velocity `F(x)` of the trait; zero on frozen compartments.
    pub fn velocity(&self, x: &Individual) -> [f64; 2] {
        match &self.rules[x.compartment() as usize] {
            FlowRule::Frozen => [0.0; 2],
            FlowRule::Translate(k) => {
                let mut v = [0.0; 2];
                v[*k] = 1.0;
                v
            }
            FlowRule::Exponential { coord, rate } => {
                let mut v = [0.0; 2];
                v[*coord] = rate * x.coord(*coord);
                v
            }
            FlowRule::VectorField(f) => f(&[x.coord(0), x.coord(1)]),
        }
    }

    /// `e^{rate·dt}` for each exponential rule, 1 elsewhere.
    fn factors(&self, dt: f64) -> Vec<f64> {
        self.rules
            .iter()
            .map(|r| match r {
                FlowRule::Exponential { rate, .. } => (rate * dt).exp(),
                _ => 1.0,
            })
            .collect()
    }

    fn advance_in_place(&self, x: &mut Individual, dt: f64, factors: &[f64]) -> std::result::Result<(), (usize, f64)> {
        if dt == 0.0 {
            return Ok(());
        }
        let c = x.compartment() as usize;
        match &self.rules[c] {
            FlowRule::Frozen => Ok(()),
            FlowRule::Translate(k) => {
                x.traits_mut()[*k] += dt;
                self.compartments[c].enforce(x.traits_mut())
            }
            FlowRule::Exponential { coord, .. } => {
                x.traits_mut()[*coord] *= factors[c];
                self.compartments[c].enforce(x.traits_mut())
            }
            FlowRule::VectorField(f) => {
                let spec = &self.compartments[c];
                let nsub = (dt / self.step.max_h).ceil().max(1.0) as usize;
                let h = dt / nsub as f64;
                let dim = spec.dim;
                let mut y = [x.coord(0), x.coord(1)];
                for _ in 0..nsub {
                    rk4_step(f.as_ref(), &mut y, h, dim);
                    spec.enforce(&mut y[..dim])?;
                }
                x.traits_mut().copy_from_slice(&y[..dim]);
                Ok(())
            }
        }
    }
}

fn rk4_step(f: &(dyn Fn(&[f64; 2]) -> [f64; 2] + Send + Sync), y: &mut [f64; 2], h: f64, dim: usize) {
    let axpy = |a: &[f64; 2], s: f64, k: &[f64; 2]| [a[0] + s * k[0], a[1] + s * k[1]];
    let k1 = f(y);
    let k2 = f(&axpy(y, h / 2.0, &k1));
    let k3 = f(&axpy(y, h / 2.0, &k2));
    let k4 = f(&axpy(y, h, &k3));
    for i in 0..dim {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// `φ_dt(x)`.
pub fn advance_individual(flow: &FlowSpec, x: &Individual, dt: f64) -> Result<Individual> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidParam(format!("negative time step {dt}")));
    }
    let mut y = *x;
    flow.advance_in_place(&mut y, dt, &flow.factors(dt)).map_err(|(coord, value)| Error::DomainExit {
        atom: 0,
        compartment: x.compartment(),
        coord,
        value,
    })?;
    Ok(y)
}

/// Moves every atom of `m` along the flow by `dt`, in place.
pub fn advance_measure_in_place(flow: &FlowSpec, m: &mut AtomicMeasure, dt: f64) -> Result<()> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidParam(format!("negative time step {dt}")));
    }
    if dt == 0.0 || flow.is_frozen() {
        return Ok(());
    }
    let factors = flow.factors(dt);
    for (i, a) in m.atoms_mut().iter_mut().enumerate() {
        let c = a.individual.compartment();
        flow.advance_in_place(&mut a.individual, dt, &factors)
            .map_err(|(coord, value)| Error::DomainExit { atom: i, compartment: c, coord, value })?;
    }
    Ok(())
}

/// `φ_dt # m`.
pub fn advance_measure(flow: &FlowSpec, m: &AtomicMeasure, dt: f64) -> Result<AtomicMeasure> {
    let mut out = m.clone();
    advance_measure_in_place(flow, &mut out, dt)?;
    Ok(out)
}

/// `A_φ h(x)`: the supplied flow derivative when present, otherwise
/// `∇h(x)·F(x)` with a central-difference gradient.
pub fn generator_apply(h: &TestFunction, x: &Individual, flow: &FlowSpec) -> f64 {
    if matches!(flow.rule(x.compartment()), FlowRule::Frozen) {
        return 0.0;
    }
    if let Some(d) = h.flow_derivative(x) {
        return d;
    }
    let v = flow.velocity(x);
    let mut out = 0.0;
    for k in 0..x.dim() {
        if v[k] == 0.0 {
            continue;
        }
        let step = 1e-5 * (1.0 + x.coord(k).abs());
        let mut up = *x;
        let mut down = *x;
        up.traits_mut()[k] += step;
        down.traits_mut()[k] -= step;
        out += (h.eval(&up) - h.eval(&down)) / (2.0 * step) * v[k];
    }
    out
}

/// `⟨m, A_φ h⟩`.
pub fn measure_generator(h: &TestFunction, m: &AtomicMeasure, flow: &FlowSpec) -> f64 {
    if flow.is_frozen() {
        return 0.0;
    }
    m.atoms()
        .iter()
        .map(|a| a.weight * generator_apply(h, &a.individual, flow))
        .sum()
}
