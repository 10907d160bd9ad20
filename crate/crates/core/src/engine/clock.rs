//! Jump-time clocks and jump selection.

use crate::error::{Error, Result};
use crate::flow::advance_measure_in_place;
use crate::measure::AtomicMeasure;
use crate::model::ModelSpec;
use crate::rng::{exp_inverse_cdf, uniform, SimRng};

/// Acceptance ratios above `1 + BOUND_SLACK` signal an invalid rate bound.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Exact exponential clock when every channel rate is flow-invariant,
    /// thinning otherwise.
    #[default]
    Auto,
    /// Always use thinning, even for flow-invariant rates.
    ForceThinning,
}

/// Something that can be moved forward along the deterministic flow.
pub(crate) trait Flowing {
    fn now(&self) -> f64;
    fn measure(&self) -> &AtomicMeasure;
    fn advance_to(&mut self, target: f64) -> Result<()>;
}

/// Outcome of one clock draw.
#[derive(Debug, PartialEq)]
pub(crate) enum Clock {
    /// A jump fires at the current (flowed) state, whose per-channel
    /// total rates are attached.
    Jump(Vec<f64>),
    /// The horizon was reached first; the state sits at the horizon.
    Horizon,
    /// Total rate and every bound vanish.
    Absorbed,
}

/// `q(m)` summed over channels.
pub fn total_rate(model: &ModelSpec, m: &AtomicMeasure) -> f64 {
    model.total_rate(m)
}

fn channel_totals(model: &ModelSpec, m: &AtomicMeasure) -> Vec<f64> {
    model.channels.iter().map(|c| c.total_rate(m)).collect()
}

pub(crate) fn next_jump<S: Flowing>(
    model: &ModelSpec,
    state: &mut S,
    horizon: f64,
    mode: ClockMode,
    rng: &mut SimRng,
) -> Result<Clock> {
    let exact = mode == ClockMode::Auto && model.constant_along_flow();
    if exact {
        let totals = channel_totals(model, state.measure());
        let q: f64 = totals.iter().sum();
        if q <= 0.0 {
            return finish_absorbed(state, horizon);
        }
        let target = state.now() + exp_inverse_cdf(uniform(rng), q);
        if target >= horizon {
            state.advance_to(horizon)?;
            return Ok(Clock::Horizon);
        }
        state.advance_to(target)?;
        return Ok(Clock::Jump(totals));
    }

    let bound: f64 = model.channels.iter().map(|c| c.rate_bound(state.measure())).sum();
    if bound <= 0.0 {
        let q = model.total_rate(state.measure());
        if q > 0.0 {
            return Err(Error::BoundViolation { ratio: f64::INFINITY, rate: q, bound });
        }
        return finish_absorbed(state, horizon);
    }
    loop {
        let target = state.now() + exp_inverse_cdf(uniform(rng), bound);
        if target >= horizon {
            state.advance_to(horizon)?;
            return Ok(Clock::Horizon);
        }
        state.advance_to(target)?;
        let totals = channel_totals(model, state.measure());
        let q: f64 = totals.iter().sum();
        let ratio = q / bound;
        if ratio > 1.0 + BOUND_SLACK {
            return Err(Error::BoundViolation { ratio, rate: q, bound });
        }
        if uniform(rng) < ratio {
            return Ok(Clock::Jump(totals));
        }
    }
}

fn finish_absorbed<S: Flowing>(state: &mut S, horizon: f64) -> Result<Clock> {
    if horizon.is_finite() {
        state.advance_to(horizon)?;
    }
    Ok(Clock::Absorbed)
}

struct Plain<'a> {
    model: &'a ModelSpec,
    t: f64,
    m: AtomicMeasure,
}

impl Flowing for Plain<'_> {
    fn now(&self) -> f64 {
        self.t
    }

    fn measure(&self) -> &AtomicMeasure {
        &self.m
    }

    fn advance_to(&mut self, target: f64) -> Result<()> {
        advance_measure_in_place(&self.model.flow, &mut self.m, target - self.t)?;
        self.t = target;
        Ok(())
    }
}

/// Draws the waiting time to the next jump from `m` and returns it with the
/// measure flowed to that time. Returns `(+∞, m)` for an absorbed state.
pub fn sample_jump_time(
    model: &ModelSpec,
    m: &AtomicMeasure,
    mode: ClockMode,
    rng: &mut SimRng,
) -> Result<(f64, AtomicMeasure)> {
    let mut state = Plain { model, t: 0.0, m: m.clone() };
    match next_jump(model, &mut state, f64::INFINITY, mode, rng)? {
        Clock::Jump(_) => Ok((state.t, state.m)),
        Clock::Horizon | Clock::Absorbed => Ok((f64::INFINITY, state.m)),
    }
}

/// Draws `(channel, atom)` with probability `w·α_i(m,x) / q(m)`.
pub fn select_jump(model: &ModelSpec, m: &AtomicMeasure, rng: &mut SimRng) -> Option<(usize, usize)> {
    let totals = channel_totals(model, m);
    select_with_totals(model, m, &totals, rng)
}

pub(crate) fn select_with_totals(
    model: &ModelSpec,
    m: &AtomicMeasure,
    totals: &[f64],
    rng: &mut SimRng,
) -> Option<(usize, usize)> {
    let q: f64 = totals.iter().sum();
    if !(q > 0.0) {
        return None;
    }
    let target = uniform(rng) * q;
    let mut acc = 0.0;
    let mut channel = totals.iter().rposition(|&r| r > 0.0)?;
    for (i, &r) in totals.iter().enumerate() {
        if r > 0.0 {
            acc += r;
            if acc > target {
                channel = i;
                break;
            }
        }
    }
    let atom = model.channels[channel].select_atom(m, totals[channel], rng);
    Some((channel, atom))
}
