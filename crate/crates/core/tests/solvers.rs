mod common;

use proptest::prelude::*;
use sspm::limit::{
    residual_check, solve_age_sir_pde, solve_bell_anderson_pde, solve_host_pathogen_particles, solve_sir_ode,
    AgeInitialDensity, Particle,
};
use sspm::zoo::bell_anderson::{BellAndersonParams, SizeRate};
use sspm::zoo::{AgeRate, HostPathogenParams, ModelConfig, ModelKind};
use sspm::TestFunction;

fn death_only(d0: f64) -> BellAndersonParams {
    BellAndersonParams {
        g: SizeRate::Constant { value: 0.0 },
        b: SizeRate::Constant { value: 0.0 },
        d: SizeRate::Constant { value: d0 },
        ..BellAndersonParams::default()
    }
}

#[test]
fn pure_death_density_decays_at_first_order() {
    let p = death_only(0.5);
    let one = TestFunction::one();
    let err = |dt: f64| {
        let sol = solve_bell_anderson_pde(&p, &|x| if (1.0..=2.0).contains(&x) { 1.0 } else { 0.0 }, 2.0, dt, 0.01, 4.0, None)
            .unwrap();
        sol.times.iter().enumerate().map(|(k, &t)| (sol.pair_at(k, &one) - (-0.5 * t).exp()).abs()).fold(0.0, f64::max)
    };
    let (e1, e2) = (err(0.01), err(0.005));
    assert!(e1 <= 0.01, "{e1}");
    assert!((e1 / e2 - 2.0).abs() < 0.1, "ratio {}", e1 / e2);
}

#[test]
fn particle_cloud_keeps_total_weight() {
    let p = HostPathogenParams::default();
    let sol = solve_host_pathogen_particles(
        &p,
        &p.kernel(),
        &[Particle { weight: 1.0, x: [1.0, 1.0] }],
        3.0,
        0.01,
        500,
        Default::default(),
        Some(0.1),
        1,
    )
    .unwrap();
    assert!(sol.mass_series().iter().all(|m| (m - 1.0).abs() < 1e-10));
}

#[test]
fn residual_flags_the_wrong_model() {
    let cfg = ModelConfig::new(ModelKind::Sir, 1);
    let sol = solve_sir_ode(1.5, 1.0, [0.99, 0.01, 0.0], 10.0, 1e-3, None).unwrap();
    let model = cfg.build(1).unwrap();
    assert!(residual_check(&sol, &model, &model.observables, 1e-3) > 1e-2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sir_ode_conserves_and_stays_nonnegative(beta in 0.1f64..5.0, gamma in 0.1f64..3.0, i0 in 0.001f64..0.5) {
        let sol = solve_sir_ode(beta, gamma, [1.0 - i0, i0, 0.0], 5.0, 1e-2, None).unwrap();
        for m in sol.mass_series() {
            prop_assert!((m - 1.0).abs() < 1e-12);
        }
        let s = TestFunction::indicator("S", 0);
        prop_assert!((0..sol.len()).all(|k| sol.pair_at(k, &s) >= 0.0));
        prop_assert!(sol.pair_at(sol.len() - 1, &s) <= 1.0 - i0);
    }

    #[test]
    fn age_pde_conserves_mass(beta in 0.0f64..5.0, gamma in 0.0f64..3.0, i0 in 0.0f64..0.5) {
        let sol = solve_age_sir_pde(
            &AgeRate::Saturating { scale: beta, half: 1.0 },
            &AgeRate::Constant { value: gamma },
            1.0 - i0,
            &AgeInitialDensity::Uniform { mass: i0, width: 1.0 },
            0.0,
            3.0,
            0.01,
            0.01,
            4.0,
            Some(0.1),
        )
        .unwrap();
        for m in sol.mass_series() {
            prop_assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn growth_fragmentation_mass_never_falls_without_death(slope in 0.2f64..1.5) {
        let p = BellAndersonParams {
            g: SizeRate::Linear { slope, intercept: 0.0 },
            d: SizeRate::Constant { value: 0.0 },
            ..BellAndersonParams::default()
        };
        let sol = solve_bell_anderson_pde(&p, &|x| if (1.0..=2.0).contains(&x) { 1.0 } else { 0.0 }, 1.0, 5e-4, 0.02, 8.0, Some(0.05)).unwrap();
        let mass = sol.mass_series();
        prop_assert!(mass.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        prop_assert_eq!(sol.clipped, 0.0);
    }
}
