//! Host–pathogen interaction with mutation.
//!
//! Each host carries a pathogen load `P` and an immune load `B` following
//! `dP/dt = rP − cBP`, `dB/dt = aBP`. At constant rate γ a host mutates: its
//! atom is replaced by one drawn from the kernel density `ψ_x`.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{bump, pick_any, require_positive, trait_moment};
use crate::error::{Error, Result};
use crate::flow::{CompartmentSpec, FlowRule, FlowSpec, StepControl, VectorField};
use crate::measure::{AtomicMeasure, Deposit, Individual, TestFunction};
use crate::model::{Channel, ChannelConstants, ModelSpec};
use crate::rng::{uniform, SimRng};

pub const HOST: u8 = 0;
/// Lower floor applied to both loads.
pub const LOAD_FLOOR: f64 = 1e-12;

/// A mutation density `ψ_x(z)` together with a sampler and a quadrature rule.
pub trait MutationKernel: Send + Sync {
    fn sample(&self, x: &Individual, rng: &mut SimRng) -> Individual;
    /// `ψ_x(z)` with respect to Lebesgue measure on `(0, ∞)²`.
    fn density(&self, x: &Individual, z: &Individual) -> f64;
    /// Weighted nodes approximating `∫ ψ_x(z) h(z) dz`.
    fn quadrature(&self, x: &Individual) -> Vec<(f64, Individual)>;
}

/// Independent log-normal jitter: `log P' ~ N(log P + δ_P, σ²)`,
/// `log B' ~ N(log B − δ_B, σ²)`.
#[derive(Clone, Debug)]
pub struct LogNormalJitter {
    pub delta_p: f64,
    pub delta_b: f64,
    pub sigma: f64,
    nodes: Vec<(f64, f64)>,
}

impl LogNormalJitter {
    pub fn new(delta_p: f64, delta_b: f64, sigma: f64) -> Self {
        let (z, w) = gauss_hermite(7);
        Self { delta_p, delta_b, sigma, nodes: z.into_iter().zip(w).collect() }
    }
}

fn lognormal_pdf(y: f64, mu: f64, sigma: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let z = (y.ln() - mu) / sigma;
    (-0.5 * z * z).exp() / (y * sigma * (2.0 * std::f64::consts::PI).sqrt())
}

impl MutationKernel for LogNormalJitter {
    fn sample(&self, x: &Individual, rng: &mut SimRng) -> Individual {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let p = (x.coord(0) * (self.delta_p + self.sigma * z1).exp()).max(LOAD_FLOOR);
        let b = (x.coord(1) * (-self.delta_b + self.sigma * z2).exp()).max(LOAD_FLOOR);
        Individual::planar(HOST, p, b)
    }

    fn density(&self, x: &Individual, z: &Individual) -> f64 {
        lognormal_pdf(z.coord(0), x.coord(0).ln() + self.delta_p, self.sigma)
            * lognormal_pdf(z.coord(1), x.coord(1).ln() - self.delta_b, self.sigma)
    }

    fn quadrature(&self, x: &Individual) -> Vec<(f64, Individual)> {
        let mut out = Vec::with_capacity(self.nodes.len() * self.nodes.len());
        for &(z1, w1) in &self.nodes {
            let p = (x.coord(0) * (self.delta_p + self.sigma * z1).exp()).max(LOAD_FLOOR);
            for &(z2, w2) in &self.nodes {
                let b = (x.coord(1) * (-self.delta_b + self.sigma * z2).exp()).max(LOAD_FLOOR);
                out.push((w1 * w2, Individual::planar(HOST, p, b)));
            }
        }
        out
    }
}

/// Nodes and weights of the `k`-point Gauss–Hermite rule for the standard
/// normal law: `E f(Z) ≈ Σ w_i f(z_i)`.
pub fn gauss_hermite(k: usize) -> (Vec<f64>, Vec<f64>) {
    // Probabilists' Hermite polynomials He_k and He_{k-1} at x.
    let he = |x: f64| -> (f64, f64) {
        let (mut prev, mut cur) = (1.0, x);
        if k == 0 {
            return (1.0, 0.0);
        }
        for j in 1..k {
            let next = x * cur - j as f64 * prev;
            prev = cur;
            cur = next;
        }
        (cur, prev)
    };
    let span = 2.0 * (k as f64).sqrt() + 2.0;
    let steps = 20_000;
    let mut roots = Vec::with_capacity(k);
    let mut x0 = -span;
    let mut f0 = he(x0).0;
    for s in 1..=steps {
        let x1 = -span + 2.0 * span * s as f64 / steps as f64;
        let f1 = he(x1).0;
        if f0 == 0.0 || f0 * f1 < 0.0 {
            let (mut lo, mut hi) = (x0, x1);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if he(lo).0 * he(mid).0 <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
    }
    let factorial: f64 = (1..=k).map(|j| j as f64).product();
    let weights = roots
        .iter()
        .map(|&z| {
            let p = he(z).1;
            factorial / ((k * k) as f64 * p * p)
        })
        .collect();
    (roots, weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HostPathogenParams {
    pub r: f64,
    pub c: f64,
    pub a_stim: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub delta_p: f64,
    pub delta_b: f64,
}

impl Default for HostPathogenParams {
    fn default() -> Self {
        Self { r: 2.0, c: 1.0, a_stim: 1.0, gamma: 0.5, sigma: 0.2, delta_p: 0.5, delta_b: 0.3 }
    }
}

impl HostPathogenParams {
    pub fn vector_field(&self) -> VectorField {
        let (r, c, a) = (self.r, self.c, self.a_stim);
        Arc::new(move |y: &[f64; 2]| [r * y[0] - c * y[1] * y[0], a * y[1] * y[0]])
    }

    /// `H(P, B) = aP + cB − r ln B`, conserved by the flow.
    pub fn first_integral(&self, x: &Individual) -> f64 {
        self.a_stim * x.coord(0) + self.c * x.coord(1) - self.r * x.coord(1).ln()
    }

    pub fn kernel(&self) -> LogNormalJitter {
        LogNormalJitter::new(self.delta_p, self.delta_b, self.sigma)
    }

    pub fn flow(&self) -> Result<FlowSpec> {
        FlowSpec::new(
            vec![CompartmentSpec::with_trait("host", 2, [0.0, 0.0], Some(LOAD_FLOOR))],
            vec![FlowRule::VectorField(self.vector_field())],
            StepControl::default(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HostPathogenInitial {
    pub p0: f64,
    pub b0: f64,
    pub mass: f64,
}

impl Default for HostPathogenInitial {
    fn default() -> Self {
        Self { p0: 1.0, b0: 1.0, mass: 1.0 }
    }
}

pub fn initial(init: &HostPathogenInitial, n: u32) -> Result<AtomicMeasure> {
    require_positive("p0", init.p0)?;
    require_positive("b0", init.b0)?;
    require_positive("mass", init.mass)?;
    let mut m = AtomicMeasure::new();
    m.with_unit_atoms(Individual::planar(HOST, init.p0, init.b0), super::count(init.mass, n));
    Ok(m)
}

pub fn random_state(n: u32, rng: &mut SimRng) -> AtomicMeasure {
    let size = (f64::from(n) * (0.5 + 1.5 * uniform(rng))) as usize;
    let mut m = AtomicMeasure::new();
    for _ in 0..size.max(1) {
        let p = 0.05 + 3.0 * uniform(rng);
        let b = 0.5 + 3.5 * uniform(rng);
        m.with_unit_atoms(Individual::planar(HOST, p, b), 1);
    }
    m
}

/// Mutate-and-replace at constant per-capita rate γ.
pub struct Mutation {
    pub gamma: f64,
    pub kernel: Arc<dyn MutationKernel>,
}

impl Channel for Mutation {
    fn name(&self) -> &str {
        "mutation"
    }

    fn rate(&self, _m: &AtomicMeasure, _x: &Individual) -> f64 {
        self.gamma
    }

    fn total_rate(&self, m: &AtomicMeasure) -> f64 {
        self.gamma * m.total_mass()
    }

    fn select_atom(&self, m: &AtomicMeasure, _total: f64, rng: &mut SimRng) -> usize {
        pick_any(m, rng)
    }

    fn make_deposits(&self, m: &AtomicMeasure, atom: usize, rng: &mut SimRng) -> Vec<Deposit> {
        let z = self.kernel.sample(&m.atoms()[atom].individual, rng);
        vec![Deposit::remove(atom), Deposit::add(z)]
    }

    fn kernel_moments(&self, m: &AtomicMeasure, atom: usize, h: &TestFunction) -> (f64, f64) {
        let x = m.atoms()[atom].individual;
        let hx = h.eval(&x);
        self.kernel.quadrature(&x).iter().fold((0.0, 0.0), |acc, (w, z)| {
            let d = h.eval(z) - hx;
            (acc.0 + w * d, acc.1 + w * d * d)
        })
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

pub fn build_host_pathogen(params: &HostPathogenParams, n: u32) -> Result<ModelSpec> {
    build_host_pathogen_with_kernel(params, Arc::new(params.kernel()), n)
}

pub fn build_host_pathogen_with_kernel(
    params: &HostPathogenParams,
    kernel: Arc<dyn MutationKernel>,
    n: u32,
) -> Result<ModelSpec> {
    for (name, v) in [("r", params.r), ("c", params.c), ("a_stim", params.a_stim), ("sigma", params.sigma)] {
        require_positive(name, v)?;
    }
    if !(params.gamma >= 0.0 && params.gamma.is_finite()) {
        return Err(Error::InvalidParam(format!("gamma must be nonnegative, got {}", params.gamma)));
    }
    if n == 0 {
        return Err(Error::InvalidParam("n must be at least 1".into()));
    }
    let p = *params;
    let vp = move |x: &Individual| p.r * x.coord(0) - p.c * x.coord(1) * x.coord(0);
    let vb = move |x: &Individual| p.a_stim * x.coord(1) * x.coord(0);
    let observables = vec![
        TestFunction::one(),
        trait_moment("P_mean", HOST, 0, 1, vp),
        trait_moment("B_mean", HOST, 1, 1, vb),
        trait_moment("P_sq", HOST, 0, 2, vp),
        trait_moment("B_sq", HOST, 1, 2, vb),
        bump("P_bump_0.25", HOST, 0, 0.25, 0.25, vp),
        bump("P_bump_1", HOST, 0, 1.0, 0.25, vp),
        bump("B_bump_1.5", HOST, 1, 1.5, 0.5, vb),
        bump("B_bump_3", HOST, 1, 3.0, 0.5, vb),
    ];
    Ok(ModelSpec {
        name: "host_pathogen".into(),
        flow: params.flow()?,
        channels: vec![Box::new(Mutation { gamma: params.gamma, kernel })],
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

    #[test]
    fn gauss_hermite_reproduces_normal_moments() {
        let (z, w) = gauss_hermite(7);
        assert_eq!(z.len(), 7);
        let moment = |p: i32| z.iter().zip(&w).map(|(z, w)| w * z.powi(p)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-12);
        assert!(moment(1).abs() < 1e-12);
        assert!((moment(2) - 1.0).abs() < 1e-10);
        assert!((moment(4) - 3.0).abs() < 1e-9);
        assert!((moment(12) - 10395.0).abs() < 1e-6);
    }

    #[test]
    fn quadrature_matches_lognormal_mean() {
        let k = LogNormalJitter::new(0.5, 0.3, 0.2);
        let x = Individual::planar(HOST, 1.5, 2.0);
        let mean_p: f64 = k.quadrature(&x).iter().map(|(w, z)| w * z.coord(0)).sum();
        let exact = 1.5 * (0.5 + 0.02_f64).exp();
        assert!((mean_p - exact).abs() < 1e-9);
    }

    #[test]
    fn density_integrates_to_one() {
        let k = LogNormalJitter::new(0.5, 0.3, 0.2);
        let x = Individual::planar(HOST, 1.0, 1.0);
        // midpoint rule in log coordinates
        let (lo, hi, cells) = (-3.0_f64, 3.0_f64, 600);
        let du = (hi - lo) / cells as f64;
        let mut total = 0.0;
        for i in 0..cells {
            let p = (lo + (i as f64 + 0.5) * du).exp();
            for j in 0..cells {
                let b = (lo + (j as f64 + 0.5) * du).exp();
                total += k.density(&x, &Individual::planar(HOST, p, b)) * p * b * du * du;
            }
        }
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mutation_preserves_atom_count() {
        let model = build_host_pathogen(&HostPathogenParams::default(), 1).unwrap();
        let mut rng = stream_rng(2, 0);
        let mut m = random_state(7, &mut rng);
        let before = m.len();
        let d = model.channels[0].make_deposits(&m, 0, &mut rng);
        m.apply_deposits(&d).unwrap();
        assert_eq!(m.len(), before);
    }

    #[test]
    fn total_rate_example() {
        let params = HostPathogenParams { gamma: 0.3, ..Default::default() };
        let model = build_host_pathogen(&params, 1).unwrap();
        let m = initial(&HostPathogenInitial { mass: 7.0, ..Default::default() }, 1).unwrap();
        assert!((model.total_rate(&m) - 2.1).abs() < 1e-12);
    }

    #[test]
    fn invalid_rates_rejected() {
        let bad = HostPathogenParams { r: 0.0, ..Default::default() };
        assert!(build_host_pathogen(&bad, 1).is_err());
        let bad = HostPathogenParams { gamma: -1.0, ..Default::default() };
        assert!(build_host_pathogen(&bad, 1).is_err());
    }
}
