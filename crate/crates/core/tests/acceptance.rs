//! Acceptance suite: one line per criterion, nonzero exit if any fails.

mod common;

use std::time::Instant;

use common::*;
use serde_json::json;
use sspm::engine::ClockMode;
use sspm::flow::{advance_individual, StepControl};
use sspm::harness::stats::ks_test;
use sspm::harness::{
    audit, lln_report, martingale_report, moment_report, panel, residual_report, residual_tolerance, run_ensemble,
    solve, ExperimentConfig,
};
use sspm::limit::{
    residual_check, solve_age_sir_pde, solve_bell_anderson_pde, solve_host_pathogen_particles, solve_sir_ode,
    AgeInitialDensity, LimitData, LimitSolution, Particle, SolverOptions,
};
use sspm::rng::stream_rng;
use sspm::zoo::audit_assumptions;
use sspm::zoo::bell_anderson::{BellAndersonParams, SizeRate};
use sspm::zoo::host_pathogen::HOST;
use sspm::zoo::sir::{build_sir_with_infection_scale, SirParams};
use sspm::zoo::{AgeRate, HostPathogenParams, ModelConfig, ModelKind};
use sspm::{Individual, TestFunction};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn cfg(kind: ModelKind, n: u32, replications: usize, horizon: f64, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ModelConfig::new(kind, n));
    c.replications = replications;
    c.horizon = horizon;
    c.seed = seed;
    c.write_trajectories = false;
    c
}

fn sir_lln() -> Outcome {
    let mut c = cfg(ModelKind::Sir, 100, 200, 10.0, 1);
    c.levels = vec![100, 400, 1600, 6400];
    let ens = run_ensemble(&c).unwrap();
    let model = c.model.build(1).unwrap();
    let r = lln_report(&ens, &solve(&c).unwrap(), &panel(&c, &model).unwrap()).unwrap();
    let errs: Vec<String> = r.levels.iter().map(|l| format!("{}:{:.4}", l.n, l.mean)).collect();
    outcome(
        r.passed,
        format!(
            "err {} strictly decreasing {}, slope {:.3} in [{}, {}]",
            errs.join(" "),
            r.strictly_decreasing,
            r.slope.unwrap_or(f64::NAN),
            r.window.0,
            r.window.1
        ),
    )
}

fn age_reduction() -> Outcome {
    let (beta, gamma) = (3.0, 1.0);
    let y0 = [0.99, 0.01, 0.0];
    let pde = solve_age_sir_pde(
        &AgeRate::Constant { value: beta },
        &AgeRate::Constant { value: gamma },
        y0[0],
        &AgeInitialDensity::Newborn { mass: y0[1] },
        y0[2],
        10.0,
        1e-3,
        1e-3,
        10.0,
        None,
    )
    .unwrap();
    let ode = solve_sir_ode(beta, gamma, y0, 10.0, 1e-3, None).unwrap();
    // Independent RK4 oracle on the same grid.
    let mut y = y0;
    let h = 1e-3;
    let mut oracle = vec![y];
    for _ in 0..10_000 {
        let add = |y: [f64; 3], k: [f64; 3], s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]];
        let k1 = sir_rhs(beta, gamma, y);
        let k2 = sir_rhs(beta, gamma, add(y, k1, h / 2.0));
        let k3 = sir_rhs(beta, gamma, add(y, k2, h / 2.0));
        let k4 = sir_rhs(beta, gamma, add(y, k3, h));
        for i in 0..3 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        oracle.push(y);
    }
    let panel = [TestFunction::indicator("S", 0), TestFunction::indicator("I", 1), TestFunction::indicator("R", 2)];
    let mut sup_oracle: f64 = 0.0;
    let mut sup_ode: f64 = 0.0;
    for (k, &t) in pde.times.iter().enumerate() {
        let j = (t / h).round() as usize;
        for (c, f) in panel.iter().enumerate() {
            let v = pde.pair_at(k, f);
            sup_oracle = sup_oracle.max((v - oracle[j][c]).abs());
            sup_ode = sup_ode.max((v - ode.pair(t, f)).abs());
        }
    }
    let deterministic = sup_oracle <= 1e-3 && sup_ode <= 1e-3;

    let constant = json!({"beta": {"constant": {"value": beta}}, "gamma": {"constant": {"value": gamma}}});
    let mut age = cfg(ModelKind::AgeSir, 400, 500, 10.0, 2);
    age.model.params = constant;
    age.grid_step = 10.0;
    let mut basic = cfg(ModelKind::Sir, 400, 500, 10.0, 3);
    basic.grid_step = 10.0;
    let (ea, eb) = (run_ensemble(&age).unwrap(), run_ensemble(&basic).unwrap());
    let mut worst: f64 = 0.0;
    let mut stochastic = true;
    for name in ["S", "I", "R"] {
        let at_t = |e: &sspm::harness::Ensemble| -> Vec<f64> {
            e.levels[0].successes().map(|t| *t.series(name).unwrap().last().unwrap()).collect()
        };
        let ((ma, sa), (mb, sb)) = (mean_se(&at_t(&ea)), mean_se(&at_t(&eb)));
        let pooled = (sa * sa + sb * sb).sqrt();
        worst = worst.max((ma - mb).abs() / pooled);
        stochastic &= (ma - mb).abs() <= 3.0 * pooled;
    }
    outcome(
        deterministic && stochastic,
        format!(
            "pde vs rk4 oracle {sup_oracle:.2e}, vs ode solver {sup_ode:.2e} (tol 1e-3); ensemble |diff|/pooled SE max {worst:.2} (tol 3)"
        ),
    )
}

fn martingale() -> Outcome {
    let mc = ModelConfig::new(ModelKind::Sir, 100);
    let model = mc.build(100).unwrap();
    let h = model.observable("R").unwrap().clone();
    let r = martingale_report(&model, &mc.initial(100).unwrap(), 5.0, &h, 1000, 4, &Default::default(), None).unwrap();
    outcome(
        r.mean_zero && r.variance_match,
        format!(
            "mean M_T {:.4} (3 SE = {:.4}), Var/E<M> = {:.3} in [0.85, 1.15]",
            r.mean,
            3.0 * r.se,
            r.variance_ratio
        ),
    )
}

fn jump_clock() -> Outcome {
    let (cells, m) = constant_rate_cells(4, 0.5, 1.5);
    let thin = ks_test(&first_jump_times(&cells, &m, ClockMode::ForceThinning, 10_000, 5), exp_cdf(2.0));
    let (sir, m) = recovering_only(2, 1.0);
    let exact = ks_test(&first_jump_times(&sir, &m, ClockMode::Auto, 10_000, 6), exp_cdf(2.0));
    outcome(
        thin.p_value > 0.01 && exact.p_value > 0.01,
        format!(
            "thinning D = {:.4} p = {:.3}; exact D = {:.4} p = {:.3} (alpha 0.01, N = 10^4)",
            thin.statistic, thin.p_value, exact.statistic, exact.p_value
        ),
    )
}

fn flow_fidelity() -> Outcome {
    let p = HostPathogenParams::default();
    let flow = p.flow().unwrap().with_step(StepControl { max_h: 1e-3 });
    let horizon = 20.0;
    let mut worst: f64 = 0.0;
    for (p0, b0) in [(1.0, 1.0), (0.5, 2.0), (2.0, 0.5), (0.1, 0.1), (3.0, 4.0)] {
        let mut x = Individual::planar(HOST, p0, b0);
        let h0 = p.first_integral(&x);
        for _ in 0..40 {
            x = advance_individual(&flow, &x, horizon / 40.0).unwrap();
            worst = worst.max((p.first_integral(&x) - h0).abs() / horizon);
        }
    }
    outcome(worst <= 1e-8, format!("max |H(t) - H(0)| / T = {worst:.2e} (tol 1e-8)"))
}

fn bell_anderson() -> Outcome {
    let d0 = 0.5;
    let death = BellAndersonParams {
        g: SizeRate::Constant { value: 0.0 },
        b: SizeRate::Constant { value: 0.0 },
        d: SizeRate::Constant { value: d0 },
        ..BellAndersonParams::default()
    };
    let dt = 0.01;
    let n0 = |x: f64| if (1.0..=2.0).contains(&x) { 1.0 } else { 0.0 };
    let sol = solve_bell_anderson_pde(&death, &n0, 3.0, dt, 0.01, 4.0, None).unwrap();
    let one = TestFunction::one();
    let death_err =
        sol.times.iter().enumerate().map(|(k, &t)| (sol.pair_at(k, &one) - (-d0 * t).exp()).abs()).fold(0.0, f64::max);
    let death_ok = death_err <= d0 * dt;

    let c = cfg(ModelKind::BellAnderson, 1000, 100, 3.0, 7);
    let ens = run_ensemble(&c).unwrap();
    let coarse = solve(&c).unwrap();
    let mut fine_cfg = c.clone();
    fine_cfg.solver.dx = Some(0.5 * fine_cfg.solver.dx.unwrap_or(0.01));
    let limit = solve(&fine_cfg).unwrap();
    let model = c.model.build(1).unwrap();
    let mut ensemble_ok = true;
    let mut worst = String::new();
    let mut worst_ratio: f64 = 0.0;
    for h in panel(&c, &model).unwrap() {
        let finals: Vec<f64> =
            ens.levels[0].successes().map(|t| *t.series(h.name()).unwrap().last().unwrap()).collect();
        let (mean, se) = mean_se(&finals);
        let target = limit.pair(3.0, &h);
        let richardson = (target - coarse.pair(3.0, &h)).abs();
        let tol = 3.0 * se + limit.scheme_error.max(richardson);
        ensemble_ok &= (mean - target).abs() <= tol;
        if (mean - target).abs() / tol > worst_ratio {
            worst_ratio = (mean - target).abs() / tol;
            worst = format!("{} {mean:.4} vs {target:.4} (tol {tol:.4})", h.name());
        }
    }
    let residual = residual_report(&c, &limit).unwrap();
    let residual_ok = residual.max_residual <= 10.0 * limit.scheme_error;
    outcome(
        death_ok && ensemble_ok && residual_ok,
        format!(
            "pure death err {death_err:.2e} (tol {:.2e}); worst ensemble {worst}; residual {:.3e} (tol {:.3e})",
            d0 * dt,
            residual.max_residual,
            10.0 * limit.scheme_error
        ),
    )
}

fn moments() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (kind, n, reps) in
        [(ModelKind::Sir, 100, 20), (ModelKind::AgeSir, 100, 20), (ModelKind::HostPathogen, 100, 20), (ModelKind::BellAnderson, 20, 40)]
    {
        let c = cfg(kind, n, reps, 10.0, 8);
        let ens = run_ensemble(&c).unwrap();
        let growth = c.model.build(n).unwrap().mass_growth_rate;
        let r = moment_report(&ens.levels[0], &[1, 2, 3], growth);
        passed &= r.explosions == 0 && r.failures == 0;
        if kind == ModelKind::BellAnderson {
            let o = &r.orders[0];
            passed &= o.passed;
            parts.push(format!(
                "bell_anderson slope {:.3} <= {:.3}",
                o.slope.unwrap_or(f64::NAN),
                o.bound
            ));
        }
        parts.push(format!("{kind:?} explosions {}", r.explosions));
    }
    outcome(passed, parts.join(", "))
}

fn audits() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for kind in [ModelKind::Sir, ModelKind::AgeSir, ModelKind::HostPathogen, ModelKind::BellAnderson] {
        let mut c = cfg(kind, 100, 2, 10.0, 9);
        c.audit_trials = 1000;
        let r = audit(&c).unwrap();
        passed &= r.passed;
        parts.push(format!("{kind:?} {}", if r.passed { "pass" } else { "FAIL" }));
    }
    let params = SirParams { beta: 3.0, gamma: 1.0 };
    let broken = audit_assumptions(
        &|n| build_sir_with_infection_scale(&params, n, 1.0),
        &|n, rng| Ok(sspm::zoo::sir::random_state(n, rng)),
        (100, 400),
        1000,
        &mut stream_rng(9, 1),
    )
    .unwrap();
    let scaling_fails = broken.check("scaling_identity", None).is_some_and(|c| !c.passed);
    parts.push(format!("unscaled SIR scaling check {}", if scaling_fails { "fails" } else { "PASSES" }));
    outcome(passed && scaling_fails, parts.join(", "))
}

/// Scales every snapshot by `1 + eps·t`.
fn corrupt(sol: &LimitSolution, eps: f64) -> LimitSolution {
    let mut out = sol.clone();
    let f: Vec<f64> = sol.times.iter().map(|t| 1.0 + eps * t).collect();
    match &mut out.data {
        LimitData::Compartments { values } => values.iter_mut().zip(&f).for_each(|(v, f)| v.iter_mut().for_each(|x| *x *= f)),
        LimitData::Age { s, r, cohorts, .. } => {
            for (k, f) in f.iter().enumerate() {
                s[k] *= f;
                r[k] *= f;
                cohorts[k].iter_mut().for_each(|x| *x *= f);
            }
        }
        LimitData::Size { density, .. } => {
            density.iter_mut().zip(&f).for_each(|(v, f)| v.iter_mut().for_each(|x| *x *= f))
        }
        LimitData::Particles { clouds } => {
            clouds.iter_mut().zip(&f).for_each(|(c, f)| c.iter_mut().for_each(|p| p.weight *= f))
        }
    }
    out
}

fn residuals() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (kind, horizon, dt_probe) in [
        (ModelKind::Sir, 10.0, 1e-3),
        (ModelKind::AgeSir, 10.0, 0.01),
        (ModelKind::BellAnderson, 3.0, 0.01),
        (ModelKind::HostPathogen, 10.0, 0.05),
    ] {
        let mut c = cfg(kind, 1, 2, horizon, 10);
        c.residual_dt = dt_probe;
        let sol = solve(&c).unwrap();
        let r = residual_report(&c, &sol).unwrap();
        let tol = residual_tolerance(kind, &sol);
        let model = c.model.build(1).unwrap();
        let bounded: Vec<TestFunction> = model.observables.iter().filter(|h| h.sup_norm().is_finite()).cloned().collect();
        let min_mass = sol.mass_series().into_iter().fold(f64::INFINITY, f64::min);
        let bad = residual_check(&corrupt(&sol, 20.0 * tol / min_mass), &model, &bounded, dt_probe);
        let detected = bad > 10.0 * tol;
        passed &= r.passed && detected;
        parts.push(format!("{kind:?} {:.2e}/{tol:.1e} corrupted {bad:.2e}", r.max_residual));
    }
    outcome(passed, parts.join(", "))
}

fn panel_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs())).fold(0.0, f64::max)
}

fn host_pathogen() -> Outcome {
    let p = HostPathogenParams::default();
    let horizon = 10.0;
    let start = [Particle { weight: 1.0, x: [1.0, 1.0] }];
    let model = ModelConfig::new(ModelKind::HostPathogen, 1).build(1).unwrap();
    let obs = &model.observables;
    let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
    let profile = |sol: &LimitSolution| -> Vec<Vec<f64>> {
        obs.iter().map(|h| grid.iter().map(|&t| sol.pair(t, h)).collect()).collect()
    };
    let solve_at = |dt: f64, cap: usize| {
        solve_host_pathogen_particles(&p, &p.kernel(), &start, horizon, dt, cap, StepControl::default(), Some(0.1), 11)
            .unwrap()
    };
    let levels: Vec<Vec<Vec<f64>>> = [(0.02, 1000), (0.01, 4000), (0.005, 16000)].iter().map(|&(dt, cap)| profile(&solve_at(dt, cap))).collect();
    let (d1, d2) = (panel_distance(&levels[0], &levels[1]), panel_distance(&levels[1], &levels[2]));
    let self_convergent = d2 < d1;

    let mut c = cfg(ModelKind::HostPathogen, 500, 50, horizon, 12);
    c.levels = vec![500, 2000];
    c.solver = SolverOptions { dt: Some(0.005), cap: Some(16000), ..Default::default() };
    let ens = run_ensemble(&c).unwrap();
    let limit = solve(&c).unwrap();
    let names: Vec<String> = obs.iter().map(|h| h.name().to_string()).collect();
    let to_limit = |t: &sspm::engine::Trajectory| -> f64 {
        let mut sup: f64 = 0.0;
        for (k, name) in t.names.iter().enumerate() {
            let h = &obs[names.iter().position(|n| n == name).unwrap()];
            for (j, &s) in t.times.iter().enumerate() {
                sup = sup.max((t.values[k][j] - limit.pair(s, h)).abs());
            }
        }
        sup
    };
    let small: Vec<_> = ens.levels[0].successes().collect();
    let large: Vec<_> = ens.levels[1].successes().collect();
    let (e500, se500) = mean_se(&small.iter().map(|t| to_limit(t)).collect::<Vec<_>>());
    let (e2000, se2000) = mean_se(&large.iter().map(|t| to_limit(t)).collect::<Vec<_>>());
    let cross: Vec<f64> = small.iter().zip(&large).map(|(a, b)| panel_distance(&a.values, &b.values)).collect();
    let (cross, _) = mean_se(&cross);
    let closer = e500 < cross && e2000 < cross;
    let ordered = e2000 <= e500 + 2.0 * se500.max(se2000);
    outcome(
        self_convergent && closer && ordered,
        format!(
            "refinement gaps {d1:.4} > {d2:.4}; err(500) {e500:.4} ± {se500:.4}, err(2000) {e2000:.4} ± {se2000:.4}, raw cross {cross:.4}"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("SIR law of large numbers", sir_lln),
        ("age-SIR reduction", age_reduction),
        ("martingale identities", martingale),
        ("jump clock", jump_clock),
        ("flow fidelity", flow_fidelity),
        ("Bell-Anderson limit consistency", bell_anderson),
        ("moment control", moments),
        ("assumption audit", audits),
        ("equation cross-check", residuals),
        ("host-pathogen self-consistency", host_pathogen),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        println!(
            "[{}] {:>2}. {name}: {} ({:.1}s)",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
