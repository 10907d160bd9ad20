//! Jump channels and model specifications.

use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::flow::{measure_generator, FlowSpec};
use crate::measure::{deposit_pairing, AtomicMeasure, Deposit, Individual, TestFunction};
use crate::rng::{uniform, SimRng};

/// Constants a channel declares for the assumption audit.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChannelConstants {
    /// `C_q` with `q_i(m) ≤ C_q (1 + ⟨m,1⟩)`; required for mass-increasing channels.
    pub growth: Option<f64>,
    /// `sup_x |α_i(m,x) − α_i(m',x)| ≤ lipschitz · ‖m − m'‖_TV`.
    pub lipschitz: f64,
    /// `α_i(m, x) ≤ rate_sup.0 + rate_sup.1 · ⟨m,1⟩`.
    pub rate_sup: (f64, f64),
}

/// One jump mechanism `(α_i, k_i)`.
///
/// `rate` is the per-individual rate. The aggregate methods have generic
/// defaults that scan the atoms; implementations override them when a
/// closed form exists.
pub trait Channel: Send + Sync {
    fn name(&self) -> &str;

    /// `α_i(m, x)`.
    fn rate(&self, m: &AtomicMeasure, x: &Individual) -> f64;

    /// `∫ m(dx) α_i(m, x)`.
    fn total_rate(&self, m: &AtomicMeasure) -> f64 {
        m.atoms().iter().map(|a| a.weight * self.rate(m, &a.individual)).sum()
    }

    /// Draws an atom index with probability `w·α_i(m,x) / total`.
    fn select_atom(&self, m: &AtomicMeasure, total: f64, rng: &mut SimRng) -> usize {
        let target = uniform(rng) * total;
        let mut acc = 0.0;
        let mut last_live = 0;
        for (i, a) in m.atoms().iter().enumerate() {
            let r = a.weight * self.rate(m, &a.individual);
            if r > 0.0 {
                acc += r;
                last_live = i;
                if acc > target {
                    return i;
                }
            }
        }
        last_live
    }

    /// Realizes `k_i(m, x)` for the atom at `atom`.
    fn make_deposits(&self, m: &AtomicMeasure, atom: usize, rng: &mut SimRng) -> Vec<Deposit>;

    /// `(E⟨k_i(m,x), h⟩, E⟨k_i(m,x), h⟩²)` over the kernel's randomness.
    ///
    /// The default assumes a deterministic kernel.
    fn kernel_moments(&self, m: &AtomicMeasure, atom: usize, h: &TestFunction) -> (f64, f64) {
        let mut rng = SimRng::seed_from_u64(0);
        let d = self.make_deposits(m, atom, &mut rng);
        let v = deposit_pairing(m, &d, h);
        (v, v * v)
    }

    /// `(Σ_x w α_i E⟨k_i,h⟩, Σ_x w α_i E⟨k_i,h⟩²)`: this channel's share of
    /// the drift `Lf(m)` and of the quadratic-variation rate, `f = ⟨·,h⟩`.
    fn jump_moments(&self, m: &AtomicMeasure, h: &TestFunction) -> (f64, f64) {
        let mut drift = 0.0;
        let mut quad = 0.0;
        for (i, a) in m.atoms().iter().enumerate() {
            let r = a.weight * self.rate(m, &a.individual);
            if r > 0.0 {
                let (k1, k2) = self.kernel_moments(m, i, h);
                drift += r * k1;
                quad += r * k2;
            }
        }
        (drift, quad)
    }

    /// Whether `∫ m(dx) α_i(m, x)` is invariant under the flow.
    fn constant_along_flow(&self) -> bool;

    /// Upper bound on the channel's total rate along the flow from `m`, valid
    /// until the next jump.
    fn rate_bound(&self, m: &AtomicMeasure) -> f64;

    /// `‖k_i‖_TV`.
    fn tv_bound(&self) -> f64;

    /// Membership in the set of channels that can increase mass.
    fn mass_increasing(&self) -> bool;

    fn constants(&self) -> ChannelConstants;
}

/// Soft check on mass drifting above a trait threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeWarning {
    pub compartment: u8,
    pub coord: usize,
    pub threshold: f64,
    /// Warn when the mass fraction above the threshold exceeds this.
    pub fraction: f64,
}

impl SizeWarning {
    /// Mass fraction above the threshold, if it exceeds the warning level.
    pub fn check(&self, m: &AtomicMeasure) -> Option<f64> {
        let total = m.total_mass();
        if total <= 0.0 {
            return None;
        }
        let above: f64 = m
            .compartment_atoms(self.compartment)
            .iter()
            .map(|&i| &m.atoms()[i])
            .filter(|a| a.individual.coord(self.coord) > self.threshold)
            .map(|a| a.weight)
            .sum();
        let frac = above / total;
        (frac > self.fraction).then_some(frac)
    }
}

/// A structured population model at scaling level `n`.
pub struct ModelSpec {
    pub name: String,
    pub flow: FlowSpec,
    pub channels: Vec<Box<dyn Channel>>,
    pub scale: u32,
    pub observables: Vec<TestFunction>,
    pub params: serde_json::Value,
    pub size_warning: Option<SizeWarning>,
    /// Upper bound on `d/dt log E⟨ν_t,1⟩` implied by the channels.
    pub mass_growth_rate: f64,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("scale", &self.scale)
            .field("channels", &self.channels.iter().map(|c| c.name()).collect::<Vec<_>>())
            .field("params", &self.params)
            .finish()
    }
}

impl ModelSpec {
    pub fn observable(&self, name: &str) -> Result<&TestFunction> {
        self.observables
            .iter()
            .find(|h| h.name() == name)
            .ok_or_else(|| Error::UnknownObservable(name.to_string()))
    }

    /// Looks up a panel by name; an empty list selects the whole registry.
    pub fn panel(&self, names: &[String]) -> Result<Vec<TestFunction>> {
        if names.is_empty() {
            return Ok(self.observables.clone());
        }
        names.iter().map(|n| self.observable(n).cloned()).collect()
    }

    /// `q(m) = Σ_i ∫ m(dx) α_i(m, x)`.
    pub fn total_rate(&self, m: &AtomicMeasure) -> f64 {
        self.channels.iter().map(|c| c.total_rate(m)).sum()
    }

    pub fn constant_along_flow(&self) -> bool {
        self.channels.iter().all(|c| c.constant_along_flow())
    }

    pub fn max_tv_bound(&self) -> f64 {
        self.channels.iter().map(|c| c.tv_bound()).fold(0.0, f64::max)
    }

    /// Checks every atom against the compartment table.
    pub fn validate_measure(&self, m: &AtomicMeasure) -> Result<()> {
        for a in m.atoms() {
            self.flow.validate(&a.individual)?;
        }
        Ok(())
    }

    /// `Lf(m) = ⟨m, A_φ h⟩ + Σ_i ∫ m(dx) α_i(m,x) ⟨k_i(m,x), h⟩` for `f = ⟨·,h⟩`.
    pub fn generator(&self, m: &AtomicMeasure, h: &TestFunction) -> f64 {
        let jumps: f64 = self.channels.iter().map(|c| c.jump_moments(m, h).0).sum();
        measure_generator(h, m, &self.flow) + jumps
    }

    /// Generator value and quadratic-variation rate
    /// `Σ_i ∫ m(dx) α_i(m,x) E⟨k_i(m,x), h⟩²`.
    pub fn generator_and_qv(&self, m: &AtomicMeasure, h: &TestFunction) -> (f64, f64) {
        let (drift, quad) = self
            .channels
            .iter()
            .map(|c| c.jump_moments(m, h))
            .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
        (measure_generator(h, m, &self.flow) + drift, quad)
    }
}
