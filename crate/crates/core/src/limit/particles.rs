use serde::{Deserialize, Serialize};

use super::{steps, stride, LimitData, LimitSolution};
use crate::error::Result;
use crate::flow::{advance_individual, StepControl};
use crate::measure::Individual;
use crate::rng::{stream_rng, uniform};
use crate::zoo::host_pathogen::HOST;
use crate::zoo::{HostPathogenParams, MutationKernel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub weight: f64,
    pub x: [f64; 2],
}

/// Position along a Hilbert curve of order 16 for a point of the unit square.
fn hilbert_index(u: f64, v: f64) -> u64 {
    const SIDE: u64 = 1 << 16;
    let clamp = |s: f64| ((s * SIDE as f64) as u64).min(SIDE - 1);
    let (mut x, mut y) = (clamp(u), clamp(v));
    let mut d = 0;
    let mut s = SIDE / 2;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = SIDE - 1 - x;
                y = SIDE - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s /= 2;
    }
    d
}

/// Systematic resampling to `cap` equally weighted particles, taken in
/// Hilbert order of the log-coordinates so that neighbours in the sweep are
/// neighbours in trait space.
fn resample(cloud: &[Particle], cap: usize, u0: f64) -> Vec<Particle> {
    let logs: Vec<[f64; 2]> = cloud.iter().map(|p| [p.x[0].ln(), p.x[1].ln()]).collect();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for l in &logs {
        for k in 0..2 {
            lo[k] = lo[k].min(l[k]);
            hi[k] = hi[k].max(l[k]);
        }
    }
    let unit = |k: usize, v: f64| if hi[k] > lo[k] { (v - lo[k]) / (hi[k] - lo[k]) } else { 0.5 };
    let mut order: Vec<(u64, usize)> =
        logs.iter().enumerate().map(|(i, l)| (hilbert_index(unit(0, l[0]), unit(1, l[1])), i)).collect();
    order.sort_unstable();

    let total: f64 = cloud.iter().map(|p| p.weight).sum();
    let w = total / cap as f64;
    let mut out = Vec::with_capacity(cap);
    let mut acc = 0.0;
    let mut k = 0;
    for &(_, i) in &order {
        acc += cloud[i].weight;
        while k < cap && (k as f64 + u0) * w < acc {
            out.push(Particle { weight: w, x: cloud[i].x });
            k += 1;
        }
    }
    while out.len() < cap {
        let last = cloud[order.last().expect("non-empty cloud").1].x;
        out.push(Particle { weight: w, x: last });
    }
    out
}

/// Weighted-particle splitting scheme for transport plus mutation.
///
/// Per step: push every particle through the flow; multiply weights by
/// `e^{−γ dt}`; give every particle one offspring drawn from `ψ_x` carrying
/// the lost weight; resample back to `cap` equal weights when the cloud
/// exceeds `cap`.
#[allow(clippy::too_many_arguments)]
pub fn solve_host_pathogen_particles(
    params: &HostPathogenParams,
    kernel: &dyn MutationKernel,
    initial: &[Particle],
    horizon: f64,
    dt: f64,
    cap: usize,
    step_control: StepControl,
    record_step: Option<f64>,
    seed: u64,
) -> Result<LimitSolution> {
    let flow = params.flow()?.with_step(step_control);
    let (n, h) = steps(horizon, dt)?;
    let every = stride(h, record_step);
    let cap = cap.max(1);
    let mut mutation_rng = stream_rng(seed, 0);
    let mut resample_rng = stream_rng(seed, 1);
    let keep = (-params.gamma * h).exp();

    let mut cloud: Vec<Particle> = initial.to_vec();
    let mut times = vec![0.0];
    let mut clouds = vec![cloud.clone()];
    for step in 1..=n {
        for p in cloud.iter_mut() {
            let y = advance_individual(&flow, &Individual::planar(HOST, p.x[0], p.x[1]), h)?;
            p.x = [y.coord(0), y.coord(1)];
        }
        if params.gamma > 0.0 {
            let parents = cloud.len();
            for i in 0..parents {
                let p = cloud[i];
                let z = kernel.sample(&Individual::planar(HOST, p.x[0], p.x[1]), &mut mutation_rng);
                cloud[i].weight = p.weight * keep;
                cloud.push(Particle { weight: p.weight - cloud[i].weight, x: [z.coord(0), z.coord(1)] });
            }
        }
        if cloud.len() > cap {
            cloud = resample(&cloud, cap, uniform(&mut resample_rng));
        }
        if step % every == 0 || step == n {
            times.push(step as f64 * h);
            clouds.push(cloud.clone());
        }
    }
    Ok(LimitSolution {
        model: "host_pathogen".into(),
        times,
        data: LimitData::Particles { clouds },
        scheme_error: h + 1.0 / (cap as f64).sqrt(),
        leakage: 0.0,
        clipped: 0.0,
    })
}
