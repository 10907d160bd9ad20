use super::LimitSolution;
use crate::measure::TestFunction;
use crate::model::ModelSpec;

/// `(t, observable, d/dt⟨ξ_t,h⟩, right-hand side)` at each probe time.
///
/// The time derivative is the five-point central difference with step
/// `dt_probe` (rounded to a multiple of the snapshot spacing); the
/// right-hand side is `model.generator(ξ_t, h)` with `model` built at
/// level 1.
pub fn residual_profile(
    solution: &LimitSolution,
    model: &ModelSpec,
    panel: &[TestFunction],
    dt_probe: f64,
) -> Vec<(f64, String, f64, f64)> {
    let len = solution.len();
    if len < 5 {
        return Vec::new();
    }
    let spacing = solution.times[1] - solution.times[0];
    let s = ((dt_probe / spacing).round() as usize).max(1);
    if 4 * s >= len {
        return Vec::new();
    }
    // The last snapshot may sit closer than one spacing to its neighbour.
    let last = if len >= 2 && (solution.times[len - 1] - solution.times[len - 2] - spacing).abs() > 1e-9 * spacing {
        len - 2
    } else {
        len - 1
    };
    if last < 4 * s {
        return Vec::new();
    }
    let mut out = Vec::new();
    for k in 2 * s..=last - 2 * s {
        let hstep = solution.times[k + s] - solution.times[k];
        let m = solution.measure(k);
        for h in panel {
            let f = |j: usize| solution.pair_at(j, h);
            let fd = (8.0 * (f(k + s) - f(k - s)) - (f(k + 2 * s) - f(k - 2 * s))) / (12.0 * hstep);
            let rhs = model.generator(&m, h);
            out.push((solution.times[k], h.name().to_string(), fd, rhs));
        }
    }
    out
}

/// Max absolute residual of the weak limit equation over probe times.
pub fn residual_check(solution: &LimitSolution, model: &ModelSpec, panel: &[TestFunction], dt_probe: f64) -> f64 {
    residual_profile(solution, model, panel, dt_probe)
        .iter()
        .map(|(_, _, fd, rhs)| (fd - rhs).abs())
        .fold(0.0, f64::max)
}
