//! The PDMP simulator on measure space.
//!
//! Between jumps every atom follows the flow; jump times come from an exact
//! exponential clock or from thinning against the channels' rate bounds; the
//! firing `(channel, atom)` pair is drawn proportionally to `w·α_i(m,x)` and
//! its kernel applied. Observables are recorded on the flowed state.

mod clock;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use clock::{sample_jump_time, select_jump, total_rate, ClockMode, BOUND_SLACK};
use clock::{next_jump, select_with_totals, Clock, Flowing};

use crate::error::{Error, Result};
use crate::flow::advance_measure_in_place;
use crate::measure::{pair, AtomicMeasure, TestFunction};
use crate::model::ModelSpec;
use crate::rng::{stream_rng, SimRng};

pub const DEFAULT_JUMP_CAP: u64 = 100_000_000;

/// What to record along a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordSpec {
    pub grid_step: f64,
    /// Observable names from the model registry; empty selects all.
    pub observables: Vec<String>,
    pub log_events: bool,
    /// Also record observables right after each jump.
    pub record_jump_times: bool,
}

impl Default for RecordSpec {
    fn default() -> Self {
        Self { grid_step: 0.1, observables: Vec::new(), log_events: false, record_jump_times: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub jump_cap: u64,
    pub clock: ClockMode,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jump_cap: DEFAULT_JUMP_CAP, clock: ClockMode::Auto }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub channel: usize,
    pub pre_mass: f64,
    pub post_mass: f64,
}

/// One simulated path. Observable values are pairings with the
/// renormalized measure `X_t = ν_t / n`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// `values[k][j]` is observable `k` at `times[j]`.
    pub values: Vec<Vec<f64>>,
    pub events: Vec<EventRecord>,
    pub final_measure: AtomicMeasure,
    pub jump_counts: Vec<u64>,
    /// `sup_t ⟨X_t, 1⟩` over the whole path.
    pub sup_mass: f64,
    pub scale: f64,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn total_jumps(&self) -> u64 {
        self.jump_counts.iter().sum()
    }

    /// `⟨X_T, 1⟩`.
    pub fn final_mass(&self) -> f64 {
        self.final_measure.total_mass() / self.scale
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|k| self.values[k].as_slice())
    }

    /// CSV rows `time,observable,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,observable,value")?;
        for (j, t) in self.times.iter().enumerate() {
            for (k, name) in self.names.iter().enumerate() {
                writeln!(w, "{t},{name},{}", self.values[k][j])?;
            }
        }
        Ok(())
    }
}

/// Result of a martingale probe for `f(X) = ⟨X, h⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub f0: f64,
    pub f_final: f64,
    /// `U_T = ∫_0^T Lf(X_s) ds`.
    pub compensator: f64,
    /// `M_T = f(X_T) − f(X_0) − U_T`.
    pub martingale: f64,
    /// Pathwise `∫_0^T (L(f²) − 2f Lf)(X_s) ds`.
    pub predicted_qv: f64,
}

struct Probe {
    h: TestFunction,
    u: f64,
    qv: f64,
    /// `(Lf, qv rate)` at the current state.
    current: Option<(f64, f64)>,
}

struct Run<'a> {
    model: &'a ModelSpec,
    t: f64,
    m: AtomicMeasure,
    grid: Vec<f64>,
    next_grid: usize,
    panel: Vec<TestFunction>,
    scale: f64,
    traj: Trajectory,
    probe: Option<Probe>,
    warned: bool,
}

impl Run<'_> {
    fn record(&mut self) {
        if self.traj.times.last().is_some_and(|&last| self.t <= last) {
            return;
        }
        self.traj.times.push(self.t);
        for (k, h) in self.panel.iter().enumerate() {
            self.traj.values[k].push(pair(&self.m, h) / self.scale);
        }
        if let (false, Some(w)) = (self.warned, self.model.size_warning) {
            if let Some(frac) = w.check(&self.m) {
                let msg = format!(
                    "t = {:.4}: {:.2}% of mass has trait coordinate {} above {}",
                    self.t,
                    100.0 * frac,
                    w.coord,
                    w.threshold
                );
                log::warn!("{}: {msg}", self.model.name);
                self.traj.warnings.push(msg);
                self.warned = true;
            }
        }
    }

    fn flow_by(&mut self, dt: f64) -> Result<()> {
        if dt <= 0.0 {
            return Ok(());
        }
        let Some(probe) = self.probe.as_mut() else {
            return advance_measure_in_place(&self.model.flow, &mut self.m, dt);
        };
        let model = self.model;
        let (mut l0, mut q0) = *probe.current.get_or_insert_with(|| model.generator_and_qv(&self.m, &probe.h));
        if model.flow.is_frozen() {
            probe.u += l0 * dt;
            probe.qv += q0 * dt;
            return Ok(());
        }
        // Simpson's rule on the flowed state.
        let nsub = (dt / model.flow.step().max_h).ceil().max(1.0) as usize;
        let hs = dt / nsub as f64;
        for _ in 0..nsub {
            advance_measure_in_place(&model.flow, &mut self.m, hs / 2.0)?;
            let (lm, qm) = model.generator_and_qv(&self.m, &probe.h);
            advance_measure_in_place(&model.flow, &mut self.m, hs / 2.0)?;
            let (l1, q1) = model.generator_and_qv(&self.m, &probe.h);
            probe.u += hs / 6.0 * (l0 + 4.0 * lm + l1);
            probe.qv += hs / 6.0 * (q0 + 4.0 * qm + q1);
            (l0, q0) = (l1, q1);
        }
        probe.current = Some((l0, q0));
        Ok(())
    }
}

impl Flowing for Run<'_> {
    fn now(&self) -> f64 {
        self.t
    }

    fn measure(&self) -> &AtomicMeasure {
        &self.m
    }

    fn advance_to(&mut self, target: f64) -> Result<()> {
        while self.next_grid < self.grid.len() && self.grid[self.next_grid] <= target {
            let g = self.grid[self.next_grid];
            self.flow_by(g - self.t)?;
            self.t = g;
            self.record();
            self.next_grid += 1;
        }
        self.flow_by(target - self.t)?;
        self.t = self.t.max(target);
        Ok(())
    }
}

fn record_grid(horizon: f64, step: f64) -> Vec<f64> {
    let k = (horizon / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=k).map(|i| i as f64 * step).collect();
    if let Some(&last) = grid.last() {
        if last < horizon - 1e-9 {
            grid.push(horizon);
        } else if let Some(l) = grid.last_mut() {
            *l = l.min(horizon);
        }
    }
    grid
}

fn run(
    model: &ModelSpec,
    m0: &AtomicMeasure,
    horizon: f64,
    rng: &mut SimRng,
    record: &RecordSpec,
    opts: &RunOptions,
    probe: Option<TestFunction>,
) -> Result<(Trajectory, Option<ProbeResult>)> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParam(format!("horizon must be positive and finite, got {horizon}")));
    }
    if !(record.grid_step > 0.0) {
        return Err(Error::InvalidParam("grid_step must be positive".into()));
    }
    model.validate_measure(m0)?;
    let panel = model.panel(&record.observables)?;
    let scale = f64::from(model.scale);
    let f0 = probe.as_ref().map(|h| pair(m0, h));
    let mut run = Run {
        model,
        t: 0.0,
        m: m0.clone(),
        grid: record_grid(horizon, record.grid_step),
        next_grid: 0,
        traj: Trajectory {
            times: Vec::new(),
            names: panel.iter().map(|h| h.name().to_string()).collect(),
            values: vec![Vec::new(); panel.len()],
            events: Vec::new(),
            final_measure: AtomicMeasure::new(),
            jump_counts: vec![0; model.channels.len()],
            sup_mass: m0.total_mass() / scale,
            scale,
            warnings: Vec::new(),
        },
        panel,
        scale,
        probe: probe.map(|h| Probe { h, u: 0.0, qv: 0.0, current: None }),
        warned: false,
    };

    let mut jumps: u64 = 0;
    loop {
        let totals = match next_jump(model, &mut run, horizon, opts.clock, rng)? {
            Clock::Horizon | Clock::Absorbed => break,
            Clock::Jump(totals) => totals,
        };
        if jumps >= opts.jump_cap {
            return Err(Error::ExplosionGuard { cap: opts.jump_cap, time: run.t });
        }
        let Some((channel, atom)) = select_with_totals(model, &run.m, &totals, rng) else {
            // The accepted state has zero rate only through rounding.
            continue;
        };
        let deposits = model.channels[channel].make_deposits(&run.m, atom, rng);
        let pre = run.m.total_mass();
        let change = run.m.apply_deposits(&deposits)?;
        let bound = model.channels[channel].tv_bound();
        if change.abs() > bound + 1e-9 {
            return Err(Error::TvBoundExceeded { channel, change, bound });
        }
        jumps += 1;
        run.traj.jump_counts[channel] += 1;
        let post = run.m.total_mass();
        run.traj.sup_mass = run.traj.sup_mass.max(post / scale);
        if record.log_events {
            run.traj.events.push(EventRecord { time: run.t, channel, pre_mass: pre, post_mass: post });
        }
        if let Some(p) = run.probe.as_mut() {
            p.current = None;
        }
        if record.record_jump_times {
            run.record();
        }
    }

    let probe_result = run.probe.take().map(|p| {
        let f0 = f0.unwrap_or(0.0);
        let f_final = pair(&run.m, &p.h);
        ProbeResult {
            f0: f0 / scale,
            f_final: f_final / scale,
            compensator: p.u / scale,
            martingale: (f_final - f0 - p.u) / scale,
            predicted_qv: p.qv / (scale * scale),
        }
    });
    run.traj.final_measure = run.m;
    Ok((run.traj, probe_result))
}

/// Simulates `model` from `m0` on `[0, horizon]` with an explicit RNG.
pub fn simulate_with_rng(
    model: &ModelSpec,
    m0: &AtomicMeasure,
    horizon: f64,
    rng: &mut SimRng,
    record: &RecordSpec,
    opts: &RunOptions,
) -> Result<Trajectory> {
    run(model, m0, horizon, rng, record, opts, None).map(|(t, _)| t)
}

/// Simulates `model` from `m0` on `[0, horizon]` using stream 0 of `seed`.
pub fn simulate(
    model: &ModelSpec,
    m0: &AtomicMeasure,
    horizon: f64,
    seed: u64,
    record: &RecordSpec,
    opts: &RunOptions,
) -> Result<Trajectory> {
    simulate_with_rng(model, m0, horizon, &mut stream_rng(seed, 0), record, opts)
}

/// Runs one path while integrating the compensator `U_T` and the predicted
/// quadratic variation of `M^f` for `f = ⟨·, h⟩`.
pub fn martingale_probe_with_rng(
    model: &ModelSpec,
    m0: &AtomicMeasure,
    horizon: f64,
    h: &TestFunction,
    rng: &mut SimRng,
    opts: &RunOptions,
) -> Result<ProbeResult> {
    let record = RecordSpec { grid_step: horizon, observables: vec![], ..RecordSpec::default() };
    let (_, probe) = run(model, m0, horizon, rng, &record, opts, Some(h.clone()))?;
    Ok(probe.expect("probe requested"))
}

pub fn martingale_probe(
    model: &ModelSpec,
    m0: &AtomicMeasure,
    horizon: f64,
    h: &TestFunction,
    seed: u64,
) -> Result<ProbeResult> {
    martingale_probe_with_rng(model, m0, horizon, h, &mut stream_rng(seed, 0), &RunOptions::default())
}
