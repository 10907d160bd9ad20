use super::{steps, stride, LimitData, LimitSolution};
use crate::error::Result;

fn rhs(beta: f64, gamma: f64, y: &[f64; 3]) -> [f64; 3] {
    let inf = beta * y[0] * y[1];
    let rec = gamma * y[1];
    [-inf, inf - rec, rec]
}

/// Classical RK4 for `S' = −βSI`, `I' = βSI − γI`, `R' = γI`.
pub fn solve_sir_ode(
    beta: f64,
    gamma: f64,
    y0: [f64; 3],
    horizon: f64,
    dt: f64,
    record_step: Option<f64>,
) -> Result<LimitSolution> {
    let (n, h) = steps(horizon, dt)?;
    let every = stride(h, record_step);
    let mut y = y0;
    let mut times = vec![0.0];
    let mut values = vec![y.to_vec()];
    let add = |a: &[f64; 3], s: f64, k: &[f64; 3]| [a[0] + s * k[0], a[1] + s * k[1], a[2] + s * k[2]];
    for step in 1..=n {
        let k1 = rhs(beta, gamma, &y);
        let k2 = rhs(beta, gamma, &add(&y, h / 2.0, &k1));
        let k3 = rhs(beta, gamma, &add(&y, h / 2.0, &k2));
        let k4 = rhs(beta, gamma, &add(&y, h, &k3));
        for i in 0..3 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if step % every == 0 || step == n {
            times.push(step as f64 * h);
            values.push(y.to_vec());
        }
    }
    Ok(LimitSolution {
        model: "sir".into(),
        times,
        data: LimitData::Compartments { values },
        scheme_error: h.powi(4),
        leakage: 0.0,
        clipped: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::TestFunction;

    fn totals(sol: &LimitSolution) -> &Vec<Vec<f64>> {
        match &sol.data {
            LimitData::Compartments { values } => values,
            _ => unreachable!(),
        }
    }

    #[test]
    fn no_infected_is_stationary() {
        let sol = solve_sir_ode(3.0, 1.0, [0.7, 0.0, 0.3], 5.0, 0.01, None).unwrap();
        assert!(totals(&sol).iter().all(|v| v == &vec![0.7, 0.0, 0.3]));
    }

    #[test]
    fn pure_recovery_is_exponential() {
        let sol = solve_sir_ode(0.0, 1.0, [0.5, 0.5, 0.0], 3.0, 1e-3, None).unwrap();
        for (t, v) in sol.times.iter().zip(totals(&sol)) {
            assert!((v[1] - 0.5 * (-t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn total_mass_conserved() {
        let sol = solve_sir_ode(3.0, 1.0, [0.99, 0.01, 0.0], 10.0, 1e-2, Some(0.1)).unwrap();
        assert_eq!(sol.len(), 101);
        for v in totals(&sol) {
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let s = TestFunction::indicator("S", 0);
        assert!((sol.pair(0.05, &s) - 0.5 * (sol.pair_at(0, &s) + sol.pair_at(1, &s))).abs() < 1e-15);
    }

    #[test]
    fn final_size_relation_holds() {
        // S_∞ = S_0 exp(−(β/γ)(1 − S_∞)) for R_0 = 0.
        let sol = solve_sir_ode(3.0, 1.0, [0.99, 0.01, 0.0], 60.0, 1e-3, Some(1.0)).unwrap();
        let s_inf = totals(&sol).last().unwrap()[0];
        let mut x: f64 = 0.05;
        for _ in 0..200 {
            x = 0.99 * (-3.0 * (1.0 - x)).exp();
        }
        assert!((s_inf - x).abs() < 1e-8, "{s_inf} vs {x}");
    }
}
