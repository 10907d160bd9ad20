//! SIR structured by age since infection.
//!
//! Infected individuals carry their infection age, which grows at unit
//! speed. Recovery happens at rate `γ(a)`; susceptibles are infected at rate
//! `λ(m)/n` with `λ(m) = ∫ β(a(y)) 1_{c(y)=I} m(dy)` and enter at age zero.

use serde::{Deserialize, Serialize};

use super::sir::{I, R, S};
use super::{bump, count, pick_in_compartment, require_nonneg, trait_moment};
use crate::error::{Error, Result};
use crate::flow::{CompartmentSpec, FlowRule, FlowSpec, StepControl};
use crate::measure::{AtomicMeasure, Deposit, Individual, TestFunction};
use crate::model::{Channel, ChannelConstants, ModelSpec};
use crate::rng::{uniform, SimRng};

/// A bounded nonnegative function of infection age.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeRate {
    Constant { value: f64 },
    /// `scale · a / (half + a)`.
    Saturating { scale: f64, half: f64 },
}

impl AgeRate {
    #[inline]
    pub fn eval(&self, a: f64) -> f64 {
        match *self {
            AgeRate::Constant { value } => value,
            AgeRate::Saturating { scale, half } => scale * a / (half + a),
        }
    }

    /// `‖·‖∞` over ages `≥ 0`.
    pub fn sup(&self) -> f64 {
        match *self {
            AgeRate::Constant { value } => value,
            AgeRate::Saturating { scale, .. } => scale,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            AgeRate::Constant { value } => value >= 0.0 && value.is_finite(),
            AgeRate::Saturating { scale, half } => scale >= 0.0 && half > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("{name}: invalid age rate {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgeSirParams {
    pub beta: AgeRate,
    pub gamma: AgeRate,
}

impl Default for AgeSirParams {
    fn default() -> Self {
        Self {
            beta: AgeRate::Saturating { scale: 3.0, half: 1.0 },
            gamma: AgeRate::Constant { value: 1.0 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgeSirInitial {
    pub s0: f64,
    pub i0: f64,
    pub r0: f64,
    /// Initial infection ages are spread evenly over `[0, i0_age_max]`.
    pub i0_age_max: f64,
}

impl Default for AgeSirInitial {
    fn default() -> Self {
        Self { s0: 0.99, i0: 0.01, r0: 0.0, i0_age_max: 0.0 }
    }
}

pub fn initial(init: &AgeSirInitial, n: u32) -> Result<AtomicMeasure> {
    require_nonneg("s0", init.s0)?;
    require_nonneg("i0", init.i0)?;
    require_nonneg("r0", init.r0)?;
    require_nonneg("i0_age_max", init.i0_age_max)?;
    let mut m = AtomicMeasure::new();
    m.with_unit_atoms(Individual::pure(S), count(init.s0, n));
    let k = count(init.i0, n);
    for j in 0..k {
        let age = init.i0_age_max * (j as f64 + 0.5) / k as f64;
        m.with_unit_atoms(Individual::scalar(I, age), 1);
    }
    m.with_unit_atoms(Individual::pure(R), count(init.r0, n));
    Ok(m)
}

pub fn random_state(n: u32, rng: &mut SimRng) -> AtomicMeasure {
    let size = (f64::from(n) * (0.5 + 1.5 * uniform(rng))) as usize;
    let mut m = AtomicMeasure::new();
    for _ in 0..size {
        let u = uniform(rng);
        let x = if u < 0.4 {
            Individual::pure(S)
        } else if u < 0.8 {
            Individual::scalar(I, 5.0 * uniform(rng))
        } else {
            Individual::pure(R)
        };
        m.with_unit_atoms(x, 1);
    }
    m
}

/// `λ(m)`.
pub fn force_of_infection(beta: &AgeRate, m: &AtomicMeasure) -> f64 {
    m.compartment_atoms(I)
        .iter()
        .map(|&i| {
            let a = &m.atoms()[i];
            a.weight * beta.eval(a.individual.coord(0))
        })
        .sum()
}

pub struct AgeRecovery {
    pub gamma: AgeRate,
}

impl Channel for AgeRecovery {
    fn name(&self) -> &str {
        "recovery"
    }

    fn rate(&self, _m: &AtomicMeasure, x: &Individual) -> f64 {
        if x.compartment() == I {
            self.gamma.eval(x.coord(0))
        } else {
            0.0
        }
    }

    fn total_rate(&self, m: &AtomicMeasure) -> f64 {
        m.compartment_atoms(I)
            .iter()
            .map(|&i| {
                let a = &m.atoms()[i];
                a.weight * self.gamma.eval(a.individual.coord(0))
            })
            .sum()
    }

    fn select_atom(&self, m: &AtomicMeasure, total: f64, rng: &mut SimRng) -> usize {
        if let AgeRate::Constant { .. } = self.gamma {
            return pick_in_compartment(m, I, rng);
        }
        let target = uniform(rng) * total;
        let mut acc = 0.0;
        let members = m.compartment_atoms(I);
        for &i in members {
            let a = &m.atoms()[i];
            acc += a.weight * self.gamma.eval(a.individual.coord(0));
            if acc > target {
                return i;
            }
        }
        *members.last().expect("recovery fired with no infected")
    }

    fn make_deposits(&self, _m: &AtomicMeasure, atom: usize, _rng: &mut SimRng) -> Vec<Deposit> {
        vec![Deposit::remove(atom), Deposit::add(Individual::pure(R))]
    }

    fn jump_moments(&self, m: &AtomicMeasure, h: &TestFunction) -> (f64, f64) {
        let hr = h.eval(&Individual::pure(R));
        let mut drift = 0.0;
        let mut quad = 0.0;
        for &i in m.compartment_atoms(I) {
            let a = &m.atoms()[i];
            let r = a.weight * self.gamma.eval(a.individual.coord(0));
            let d = hr - h.eval(&a.individual);
            drift += r * d;
            quad += r * d * d;
        }
        (drift, quad)
    }

    fn constant_along_flow(&self) -> bool {
        matches!(self.gamma, AgeRate::Constant { .. })
    }

    fn rate_bound(&self, m: &AtomicMeasure) -> f64 {
        self.gamma.sup() * m.compartment_mass(I)
    }

    fn tv_bound(&self) -> f64 {
        2.0
    }

    fn mass_increasing(&self) -> bool {
        false
    }

    fn constants(&self) -> ChannelConstants {
        ChannelConstants { growth: None, lipschitz: 0.0, rate_sup: (self.gamma.sup(), 0.0) }
    }
}

pub struct AgeInfection {
    pub beta: AgeRate,
    pub n: f64,
}

impl Channel for AgeInfection {
    fn name(&self) -> &str {
        "infection"
    }

    fn rate(&self, m: &AtomicMeasure, x: &Individual) -> f64 {
        if x.compartment() == S {
            force_of_infection(&self.beta, m) / self.n
        } else {
            0.0
        }
    }

    fn total_rate(&self, m: &AtomicMeasure) -> f64 {
        let s = m.compartment_mass(S);
        if s == 0.0 {
            return 0.0;
        }
        s * force_of_infection(&self.beta, m) / self.n
    }

    fn select_atom(&self, m: &AtomicMeasure, _total: f64, rng: &mut SimRng) -> usize {
        pick_in_compartment(m, S, rng)
    }

    fn make_deposits(&self, _m: &AtomicMeasure, atom: usize, _rng: &mut SimRng) -> Vec<Deposit> {
        vec![Deposit::remove(atom), Deposit::add(Individual::scalar(I, 0.0))]
    }

    fn jump_moments(&self, m: &AtomicMeasure, h: &TestFunction) -> (f64, f64) {
        let total = self.total_rate(m);
        let d = h.eval(&Individual::scalar(I, 0.0)) - h.eval(&Individual::pure(S));
        (total * d, total * d * d)
    }

    fn constant_along_flow(&self) -> bool {
        matches!(self.beta, AgeRate::Constant { .. })
    }

    /// `‖β‖∞ I(m) S(m) / n`: compartment counts are frozen between jumps.
    fn rate_bound(&self, m: &AtomicMeasure) -> f64 {
        self.beta.sup() * m.compartment_mass(I) * m.compartment_mass(S) / self.n
    }

    fn tv_bound(&self) -> f64 {
        2.0
    }

    fn mass_increasing(&self) -> bool {
        false
    }

    fn constants(&self) -> ChannelConstants {
        let b = self.beta.sup() / self.n;
        ChannelConstants { growth: None, lipschitz: b, rate_sup: (0.0, b) }
    }
}

pub fn build_age_sir(params: &AgeSirParams, n: u32) -> Result<ModelSpec> {
    params.beta.validate("beta")?;
    params.gamma.validate("gamma")?;
    if n == 0 {
        return Err(Error::InvalidParam("n must be at least 1".into()));
    }
    let flow = FlowSpec::new(
        vec![
            CompartmentSpec::pure("S"),
            CompartmentSpec::with_trait("I", 1, [0.0, 0.0], None),
            CompartmentSpec::pure("R"),
        ],
        vec![FlowRule::Frozen, FlowRule::Translate(0), FlowRule::Frozen],
        StepControl::default(),
    )?;
    let unit = |_: &Individual| 1.0;
    let observables = vec![
        TestFunction::indicator("S", S),
        TestFunction::indicator("I", I),
        TestFunction::indicator("R", R),
        TestFunction::one(),
        trait_moment("age_mean", I, 0, 1, unit),
        trait_moment("age_sq", I, 0, 2, unit),
        bump("age_bump_1", I, 0, 1.0, 0.5, unit),
        bump("age_bump_3", I, 0, 3.0, 1.0, unit),
    ];
    Ok(ModelSpec {
        name: "age_sir".into(),
        flow,
        channels: vec![
            Box::new(AgeRecovery { gamma: params.gamma }),
            Box::new(AgeInfection { beta: params.beta, n: f64::from(n) }),
        ],
        scale: n,
        observables,
        params: serde_json::to_value(params).expect("serializable params"),
        size_warning: None,
        mass_growth_rate: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::zoo::sir::{build_sir, SirParams};

    #[test]
    fn newly_infected_enter_at_age_zero() {
        let model = build_age_sir(&AgeSirParams::default(), 1).unwrap();
        let mut m = AtomicMeasure::new();
        m.push(1.0, Individual::pure(S)).unwrap();
        m.push(1.0, Individual::scalar(I, 2.0)).unwrap();
        let mut rng = stream_rng(0, 0);
        let d = model.channels[1].make_deposits(&m, 0, &mut rng);
        m.apply_deposits(&d).unwrap();
        let ages: Vec<f64> = m.compartment_atoms(I).iter().map(|&i| m.atoms()[i].individual.coord(0)).collect();
        assert!(ages.contains(&0.0));
        assert_eq!(m.compartment_mass(S), 0.0);
    }

    #[test]
    fn constant_rates_reduce_to_basic_sir() {
        let (beta, gamma) = (2.5, 0.8);
        let age = build_age_sir(
            &AgeSirParams { beta: AgeRate::Constant { value: beta }, gamma: AgeRate::Constant { value: gamma } },
            7,
        )
        .unwrap();
        let basic = build_sir(&SirParams { beta, gamma }, 7).unwrap();
        let mut rng = stream_rng(3, 0);
        for _ in 0..50 {
            let m = random_state(7, &mut rng);
            // Map to the pure-compartment state space.
            let mut flat = AtomicMeasure::new();
            for a in m.atoms() {
                flat.push(a.weight, Individual::pure(a.individual.compartment())).unwrap();
            }
            for (ca, cb) in age.channels.iter().zip(&basic.channels) {
                assert!((ca.total_rate(&m) - cb.total_rate(&flat)).abs() < 1e-9);
                for (a, b) in m.atoms().iter().zip(flat.atoms()) {
                    assert!((ca.rate(&m, &a.individual) - cb.rate(&flat, &b.individual)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn no_infected_no_force() {
        let model = build_age_sir(&AgeSirParams::default(), 10).unwrap();
        let mut m = AtomicMeasure::new();
        m.with_unit_atoms(Individual::pure(S), 5).with_unit_atoms(Individual::pure(R), 2);
        assert_eq!(force_of_infection(&AgeSirParams::default().beta, &m), 0.0);
        assert_eq!(model.channels[1].total_rate(&m), 0.0);
    }

    #[test]
    fn rate_bound_between_total_rate_and_crude_bound() {
        let p = AgeSirParams::default();
        let model = build_age_sir(&p, 20).unwrap();
        let mut rng = stream_rng(5, 0);
        for _ in 0..20 {
            let m = random_state(20, &mut rng);
            let mass = m.total_mass();
            let bound: f64 = model.channels.iter().map(|c| c.rate_bound(&m)).sum();
            let crude = p.gamma.sup() * mass + p.beta.sup() * mass * mass / 20.0;
            assert!(bound <= crude + 1e-9);
            assert!(model.total_rate(&m) <= bound + 1e-9);
        }
    }
}
