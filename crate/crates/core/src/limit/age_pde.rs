use super::{steps, stride, LimitData, LimitSolution};
use crate::error::{Error, Result};
use crate::zoo::AgeRate;

/// Initial infected population as a function of infection age.
#[derive(Clone, Debug, PartialEq)]
pub enum AgeInitialDensity {
    /// All mass at age zero.
    Newborn { mass: f64 },
    /// Mass spread evenly over `[0, width]`.
    Uniform { mass: f64, width: f64 },
    /// Explicit `(age, mass)` cohorts.
    Cohorts(Vec<(f64, f64)>),
}

impl AgeInitialDensity {
    fn cohorts(&self, da: f64) -> Vec<(f64, f64)> {
        match self {
            AgeInitialDensity::Newborn { mass } => vec![(0.0, *mass)],
            AgeInitialDensity::Uniform { mass, width } => {
                let k = (width / da).ceil().max(1.0) as usize;
                let w = width / k as f64;
                (0..k).rev().map(|j| ((j as f64 + 0.5) * w, mass / k as f64)).collect()
            }
            AgeInitialDensity::Cohorts(c) => {
                let mut c = c.clone();
                c.sort_by(|a, b| b.0.total_cmp(&a.0));
                c
            }
        }
    }
}

/// Age-structured SIR along characteristics (`da = dt`).
///
/// Each cohort decays by `exp(−γ(a + dt/2)·dt)` per step with the lost mass
/// moved to `R`; the boundary cohort carries the mass that left `S` during
/// the step, `S` being updated with the force of infection averaged over the
/// step (Heun). Total mass is conserved exactly.
#[allow(clippy::too_many_arguments)]
pub fn solve_age_sir_pde(
    beta: &AgeRate,
    gamma: &AgeRate,
    s0: f64,
    i0: &AgeInitialDensity,
    r0: f64,
    horizon: f64,
    dt: f64,
    da: f64,
    a_max: f64,
    record_step: Option<f64>,
) -> Result<LimitSolution> {
    if (da - dt).abs() > 1e-12 * dt.max(1.0) {
        return Err(Error::Grid(format!("age step {da} must equal time step {dt}")));
    }
    let (n, h) = steps(horizon, dt)?;
    let initial = i0.cohorts(h);
    let oldest = initial.iter().map(|c| c.0).fold(0.0, f64::max);
    if oldest + horizon > a_max + 1e-9 {
        return Err(Error::Grid(format!(
            "initial ages up to {oldest} overflow a_max = {a_max} by the horizon {horizon}"
        )));
    }
    let every = stride(h, record_step);

    let mut births: Vec<f64> = initial.iter().map(|c| -c.0).collect();
    let mut c: Vec<f64> = initial.iter().map(|c| c.1).collect();
    let (mut s, mut r) = (s0, r0);
    let mut times = vec![0.0];
    let (mut s_rec, mut r_rec, mut cohorts) = (vec![s], vec![r], vec![c.clone()]);
    births.reserve(n);
    c.reserve(n);

    for step in 0..n {
        let t = step as f64 * h;
        let mut lam0 = 0.0;
        let mut lam1 = 0.0;
        for (cj, &tau) in c.iter_mut().zip(&births) {
            let a = t - tau;
            lam0 += beta.eval(a) * *cj;
            let kept = *cj * (-gamma.eval(a + 0.5 * h) * h).exp();
            r += *cj - kept;
            *cj = kept;
            lam1 += beta.eval(a + h) * kept;
        }
        let newborn_survival = (-gamma.eval(0.25 * h) * 0.5 * h).exp();
        let trial = s * (1.0 - (-lam0 * h).exp());
        lam1 += beta.eval(0.5 * h) * trial * newborn_survival;
        let s_new = s * (-0.5 * (lam0 + lam1) * h).exp();
        let infected = s - s_new;
        let survive = infected * newborn_survival;
        r += infected - survive;
        s = s_new;
        births.push(t + 0.5 * h);
        c.push(survive);

        let done = step + 1;
        if done % every == 0 || done == n {
            times.push(done as f64 * h);
            s_rec.push(s);
            r_rec.push(r);
            cohorts.push(c.clone());
        }
    }
    Ok(LimitSolution {
        model: "age_sir".into(),
        times,
        data: LimitData::Age { births, s: s_rec, r: r_rec, cohorts },
        scheme_error: h,
        leakage: 0.0,
        clipped: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::solve_sir_ode;
    use crate::measure::TestFunction;
    use crate::zoo::sir::{I, R, S};

    fn constant(v: f64) -> AgeRate {
        AgeRate::Constant { value: v }
    }

    #[test]
    fn pure_transport_is_exact_translation() {
        let i0 = AgeInitialDensity::Cohorts(vec![(0.5, 0.2), (1.5, 0.1)]);
        let sol =
            solve_age_sir_pde(&constant(0.0), &constant(0.0), 0.7, &i0, 0.0, 2.0, 0.01, 0.01, 4.0, Some(0.5))
                .unwrap();
        let k = sol.nearest(2.0);
        let m = sol.measure(k);
        let ages: Vec<(f64, f64)> = m
            .compartment_atoms(I)
            .iter()
            .map(|&i| (m.atoms()[i].individual.coord(0), m.atoms()[i].weight))
            .collect();
        assert_eq!(ages.len(), 2);
        assert!(ages.iter().any(|&(a, w)| (a - 3.5).abs() < 1e-12 && w == 0.1));
        assert!(ages.iter().any(|&(a, w)| (a - 2.5).abs() < 1e-12 && w == 0.2));
        assert_eq!(m.compartment_mass(S), 0.7);
    }

    #[test]
    fn constant_rates_reduce_to_sir_ode() {
        let (beta, gamma) = (3.0, 1.0);
        let age = solve_age_sir_pde(
            &constant(beta),
            &constant(gamma),
            0.99,
            &AgeInitialDensity::Newborn { mass: 0.01 },
            0.0,
            10.0,
            1e-3,
            1e-3,
            10.0,
            Some(0.1),
        )
        .unwrap();
        let ode = solve_sir_ode(beta, gamma, [0.99, 0.01, 0.0], 10.0, 1e-3, Some(0.1)).unwrap();
        assert_eq!(age.times.len(), ode.times.len());
        let mut worst: f64 = 0.0;
        for c in [S, I, R] {
            let h = TestFunction::indicator("c", c);
            for k in 0..age.len() {
                worst = worst.max((age.pair_at(k, &h) - ode.pair_at(k, &h)).abs());
            }
        }
        assert!(worst < 1e-4, "sup error {worst}");
    }

    #[test]
    fn mass_conserved_and_grid_checked() {
        let sol = solve_age_sir_pde(
            &AgeRate::Saturating { scale: 3.0, half: 1.0 },
            &constant(1.0),
            0.9,
            &AgeInitialDensity::Uniform { mass: 0.1, width: 1.0 },
            0.0,
            5.0,
            1e-2,
            1e-2,
            6.0,
            None,
        )
        .unwrap();
        for m in sol.mass_series() {
            assert!((m - 1.0).abs() < 1e-12);
        }
        let i0 = AgeInitialDensity::Uniform { mass: 0.1, width: 1.0 };
        let c = constant(1.0);
        assert!(solve_age_sir_pde(&c, &c, 0.9, &i0, 0.0, 5.0, 1e-2, 2e-2, 6.0, None).is_err());
        assert!(solve_age_sir_pde(&c, &c, 0.9, &i0, 0.0, 5.0, 1e-2, 1e-2, 5.5, None).is_err());
    }
}
