//! Small statistical toolkit: sample moments, least squares, KS test.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    (mean, (sample_variance(xs, mean) / n as f64).sqrt())
}

/// Unbiased sample variance around `mean`.
pub fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residuals.
    pub slope_se: f64,
    /// Degrees of freedom of the residuals.
    pub dof: usize,
}

impl LinearFit {
    /// Two-sided confidence interval for the slope at `level`.
    pub fn slope_ci(&self, level: f64) -> Option<(f64, f64)> {
        if self.dof == 0 || !self.slope_se.is_finite() {
            return None;
        }
        let t = StudentsT::new(0.0, 1.0, self.dof as f64).ok()?.inverse_cdf(0.5 + level / 2.0);
        Some((self.slope - t * self.slope_se, self.slope + t * self.slope_se))
    }

    /// Weights `c_k` with `slope = Σ c_k y_k`.
    pub fn slope_weights(xs: &[f64]) -> Vec<f64> {
        let n = xs.len() as f64;
        let xbar = xs.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
        xs.iter().map(|x| (x - xbar) / sxx).collect()
    }
}

/// Ordinary least squares of `ys` on `xs`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let xbar = xs.iter().sum::<f64>() / nf;
    let ybar = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let dof = n - 2;
    let slope_se = if dof > 0 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / dof as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LinearFit { slope, intercept, slope_se, dof })
}

/// Kolmogorov distribution tail `P(K > λ)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub samples: usize,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d), samples: xs.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, uniform};

    #[test]
    fn ols_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let fit = ols(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12 && (fit.intercept - 2.0).abs() < 1e-12);
        assert!(fit.slope_se < 1e-12);
        let w = LinearFit::slope_weights(&xs);
        let s: f64 = w.iter().zip(&ys).map(|(c, y)| c * y).sum();
        assert!((s - fit.slope).abs() < 1e-12);
    }

    #[test]
    fn slope_ci_uses_student_t() {
        let fit = LinearFit { slope: 1.0, intercept: 0.0, slope_se: 0.1, dof: 2 };
        let (lo, hi) = fit.slope_ci(0.95).unwrap();
        // t_{0.975, 2} = 4.302653
        assert!((hi - 1.0 - 0.4302653).abs() < 1e-6 && (1.0 - lo - 0.4302653).abs() < 1e-6);
    }

    #[test]
    fn kolmogorov_tail_known_values() {
        // P(K > 1.36) ≈ 0.0495, P(K > 1.63) ≈ 0.0098
        assert!((kolmogorov_tail(1.36) - 0.0495).abs() < 5e-4);
        assert!((kolmogorov_tail(1.63) - 0.0098).abs() < 3e-4);
    }

    #[test]
    fn ks_accepts_uniform_and_rejects_shifted() {
        let mut rng = stream_rng(11, 0);
        let xs: Vec<f64> = (0..5000).map(|_| uniform(&mut rng)).collect();
        assert!(ks_test(&xs, |x| x.clamp(0.0, 1.0)).p_value > 0.01);
        let shifted: Vec<f64> = xs.iter().map(|x| x * 0.9).collect();
        assert!(ks_test(&shifted, |x| x.clamp(0.0, 1.0)).p_value < 1e-6);
    }

    #[test]
    fn mean_and_se() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0_f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
    }
}
