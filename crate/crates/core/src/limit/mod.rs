//! Deterministic solvers for the large-population limit of each model.
//!
//! Every solver returns a [`LimitSolution`]: a time grid with one snapshot
//! per grid time, evaluable against the same observable panels as the
//! stochastic runs.

mod age_pde;
mod growth_frag;
mod particles;
mod residual;
mod sir_ode;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use age_pde::{solve_age_sir_pde, AgeInitialDensity};
pub use growth_frag::{default_x_max, solve_bell_anderson_pde};
pub use particles::{solve_host_pathogen_particles, Particle};
pub use residual::{residual_check, residual_profile};
pub use sir_ode::solve_sir_ode;

use crate::error::{Error, Result};
use crate::measure::{pair, AtomicMeasure, Individual, TestFunction};
use crate::zoo::{age_sir, bell_anderson, host_pathogen, sir, ModelConfig, ModelKind};

/// Per-snapshot state, indexed like [`LimitSolution::times`].
#[derive(Clone, Debug)]
pub enum LimitData {
    /// Masses of pure compartments.
    Compartments { values: Vec<Vec<f64>> },
    /// Infection-age cohorts: cohort `j` was born at `births[j]`;
    /// `cohorts[k]` holds the masses of the cohorts alive at snapshot `k`.
    Age { births: Vec<f64>, s: Vec<f64>, r: Vec<f64>, cohorts: Vec<Vec<f64>> },
    /// Cell-averaged size density on a uniform grid starting at `x0`.
    Size { x0: f64, dx: f64, density: Vec<Vec<f64>> },
    /// Weighted particle clouds.
    Particles { clouds: Vec<Vec<Particle>> },
}

#[derive(Clone, Debug)]
pub struct LimitSolution {
    pub model: String,
    pub times: Vec<f64>,
    pub data: LimitData,
    /// Size of the scheme's leading error term, e.g. `dt⁴` for RK4.
    pub scheme_error: f64,
    /// Mass lost through the upper boundary of a truncated domain.
    pub leakage: f64,
    /// Total negative mass removed by clipping undershoots.
    pub clipped: f64,
}

impl LimitSolution {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// The snapshot at index `k` as a weighted atomic measure.
    pub fn measure(&self, k: usize) -> AtomicMeasure {
        let mut m = AtomicMeasure::new();
        let mut push = |w: f64, x: Individual| {
            if w > 0.0 {
                m.push(w, x).expect("positive weight");
            }
        };
        match &self.data {
            LimitData::Compartments { values } => {
                for (c, &v) in values[k].iter().enumerate() {
                    push(v, Individual::pure(c as u8));
                }
            }
            LimitData::Age { births, s, r, cohorts } => {
                push(s[k], Individual::pure(sir::S));
                push(r[k], Individual::pure(sir::R));
                let t = self.times[k];
                for (j, &w) in cohorts[k].iter().enumerate() {
                    push(w, Individual::scalar(sir::I, t - births[j]));
                }
            }
            LimitData::Size { x0, dx, density } => {
                for (i, &v) in density[k].iter().enumerate() {
                    push(v * dx, Individual::scalar(bell_anderson::CELL, x0 + (i as f64 + 0.5) * dx));
                }
            }
            LimitData::Particles { clouds } => {
                for p in &clouds[k] {
                    push(p.weight, Individual::planar(host_pathogen::HOST, p.x[0], p.x[1]));
                }
            }
        }
        m
    }

    /// `⟨ξ_{t_k}, h⟩`.
    pub fn pair_at(&self, k: usize, h: &TestFunction) -> f64 {
        match &self.data {
            LimitData::Compartments { values } if h.is_compartmental() => values[k]
                .iter()
                .enumerate()
                .map(|(c, v)| v * h.eval(&Individual::pure(c as u8)))
                .sum(),
            _ => pair(&self.measure(k), h),
        }
    }

    /// `⟨ξ_t, h⟩`, linearly interpolated between snapshots.
    pub fn pair(&self, t: f64, h: &TestFunction) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.pair_at(0, h);
        }
        if k >= self.len() {
            return self.pair_at(self.len() - 1, h);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.pair_at(k - 1, h), self.pair_at(k, h));
        if t1 - t0 <= 0.0 {
            return v1;
        }
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Index of the snapshot closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            0
        } else if k >= self.len() || (t - self.times[k - 1]) <= (self.times[k] - t) {
            k.min(self.len()) - 1
        } else {
            k
        }
    }

    /// `⟨ξ_t, 1⟩` at every snapshot.
    pub fn mass_series(&self) -> Vec<f64> {
        let one = TestFunction::one();
        (0..self.len()).map(|k| self.pair_at(k, &one)).collect()
    }

    /// CSV rows `time,observable,value` for every snapshot and observable.
    pub fn write_csv<W: Write>(&self, panel: &[TestFunction], mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,observable,value")?;
        for (k, t) in self.times.iter().enumerate() {
            for h in panel {
                writeln!(w, "{t},{},{}", h.name(), self.pair_at(k, h))?;
            }
        }
        Ok(())
    }

    /// CSV rows `time,coordinate,density` for grid-based solutions.
    pub fn write_density_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,coordinate,density")?;
        match &self.data {
            LimitData::Age { births, cohorts, .. } => {
                for (k, t) in self.times.iter().enumerate() {
                    for (j, &c) in cohorts[k].iter().enumerate() {
                        let da = if j + 1 < births.len() { births[j + 1] - births[j] } else { 1.0 };
                        let da = if da > 0.0 { da } else { 1.0 };
                        writeln!(w, "{t},{},{}", t - births[j], c / da)?;
                    }
                }
            }
            LimitData::Size { x0, dx, density } => {
                for (k, t) in self.times.iter().enumerate() {
                    for (i, &v) in density[k].iter().enumerate() {
                        writeln!(w, "{t},{},{v}", x0 + (i as f64 + 0.5) * dx)?;
                    }
                }
            }
            _ => return Err(Error::Grid(format!("{} solution has no density representation", self.model))),
        }
        Ok(())
    }
}

/// Solver tolerances; unset fields take per-model defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub dt: Option<f64>,
    /// Size grid spacing for growth–fragmentation.
    pub dx: Option<f64>,
    pub x_max: Option<f64>,
    /// Particle cap for host–pathogen.
    pub cap: Option<usize>,
    /// Spacing of recorded snapshots.
    pub record_step: Option<f64>,
}

/// Snapshot stride for a given step and record spacing.
pub(crate) fn stride(dt: f64, record_step: Option<f64>) -> usize {
    record_step.map_or(1, |r| ((r / dt).round() as usize).max(1))
}

/// Number of steps of size close to `dt` covering `[0, horizon]`, and the
/// adjusted step.
pub(crate) fn steps(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Grid(format!("time step must be positive, got {dt}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
    }
    let n = (horizon / dt).round().max(1.0) as usize;
    Ok((n, horizon / n as f64))
}

/// Solves the limit equation of the configured model on `[0, horizon]`.
pub fn solve_limit(cfg: &ModelConfig, horizon: f64, opts: &SolverOptions, seed: u64) -> Result<LimitSolution> {
    let parse_err = |e: serde_json::Error| Error::Config(e.to_string());
    let params = |v: &serde_json::Value| if v.is_null() { serde_json::json!({}) } else { v.clone() };
    match cfg.model {
        ModelKind::Sir => {
            let p: sir::SirParams = serde_json::from_value(params(&cfg.params)).map_err(parse_err)?;
            let i: sir::SirInitial = serde_json::from_value(params(&cfg.initial)).map_err(parse_err)?;
            let dt = opts.dt.unwrap_or(1e-3);
            solve_sir_ode(p.beta, p.gamma, [i.s0, i.i0, i.r0], horizon, dt, opts.record_step)
        }
        ModelKind::AgeSir => {
            let p: age_sir::AgeSirParams = serde_json::from_value(params(&cfg.params)).map_err(parse_err)?;
            let i: age_sir::AgeSirInitial = serde_json::from_value(params(&cfg.initial)).map_err(parse_err)?;
            let dt = opts.dt.unwrap_or(1e-3);
            let density = if i.i0_age_max > 0.0 {
                AgeInitialDensity::Uniform { mass: i.i0, width: i.i0_age_max }
            } else {
                AgeInitialDensity::Newborn { mass: i.i0 }
            };
            let a_max = opts.x_max.unwrap_or(horizon + i.i0_age_max);
            solve_age_sir_pde(
                &p.beta,
                &p.gamma,
                i.s0,
                &density,
                i.r0,
                horizon,
                dt,
                dt,
                a_max,
                Some(opts.record_step.unwrap_or(0.01)),
            )
        }
        ModelKind::BellAnderson => {
            let p: bell_anderson::BellAndersonParams =
                serde_json::from_value(params(&cfg.params)).map_err(parse_err)?;
            let i: bell_anderson::BellAndersonInitial =
                serde_json::from_value(params(&cfg.initial)).map_err(parse_err)?;
            let dx = opts.dx.unwrap_or(0.01);
            let x_max = opts.x_max.unwrap_or_else(|| default_x_max(&p, horizon));
            let g_max = p.g.sup_on(p.a_min, x_max);
            let dt = opts.dt.unwrap_or(if g_max > 0.0 { 0.5 * dx / g_max } else { 1e-3 });
            let n0 = bell_anderson::initial_density(&p, &i);
            solve_bell_anderson_pde(&p, &n0, horizon, dt, dx, x_max, Some(opts.record_step.unwrap_or(0.01)))
        }
        ModelKind::HostPathogen => {
            let p: host_pathogen::HostPathogenParams =
                serde_json::from_value(params(&cfg.params)).map_err(parse_err)?;
            let i: host_pathogen::HostPathogenInitial =
                serde_json::from_value(params(&cfg.initial)).map_err(parse_err)?;
            let cloud = vec![Particle { weight: i.mass, x: [i.p0, i.b0] }];
            let kernel = p.kernel();
            solve_host_pathogen_particles(
                &p,
                &kernel,
                &cloud,
                horizon,
                opts.dt.unwrap_or(0.01),
                opts.cap.unwrap_or(4000),
                cfg.step,
                Some(opts.record_step.unwrap_or(0.05)),
                seed,
            )
        }
    }
}
