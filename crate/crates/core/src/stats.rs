//! Small descriptive-statistics helpers.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::rng;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator; 0 for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

fn central_moment(xs: &[f64], m: f64, p: i32) -> f64 {
    xs.iter().map(|x| (x - m).powi(p)).sum::<f64>() / xs.len() as f64
}

pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let m2 = central_moment(xs, m, 2);
    central_moment(xs, m, 3) / m2.powf(1.5)
}

pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let m2 = central_moment(xs, m, 2);
    central_moment(xs, m, 4) / (m2 * m2) - 3.0
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Kolmogorov-Smirnov distance between the empirical law of `xs` and N(0, 1).
pub fn ks_distance_to_normal(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = standard_normal_cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Bootstrap standard error of the sample variance, `resamples` draws from a seeded stream.
pub fn bootstrap_variance_se(xs: &[f64], resamples: usize, seed: u64) -> f64 {
    if xs.len() < 2 || resamples < 2 {
        return 0.0;
    }
    let mut rng = rng::stream(seed);
    let n = xs.len();
    let mut buf = vec![0.0; n];
    let vars: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[rng.random_range(0..n)];
            }
            sample_variance(&buf)
        })
        .collect();
    sample_variance(&vars).sqrt()
}

/// Ordinary least squares of `y` on `x`: `(slope, intercept, r_squared)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert_abs_diff_eq!(sample_variance(&xs), 5.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(skewness(&xs), 0.0, epsilon = 1e-15);
        // uniform-ish four points: m4/m2^2 = 2.5625/1.5625
        assert_abs_diff_eq!(excess_kurtosis(&xs), 2.5625 / 1.5625 - 3.0, epsilon = 1e-12);
        assert_eq!(sample_variance(&[1.0]), 0.0);
    }

    #[test]
    fn ks_of_quantile_grid_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| standard_normal_quantile((i as f64 + 0.5) / n as f64)).collect();
        assert!(ks_distance_to_normal(&xs) <= 0.5 / n as f64 + 1e-9);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
        assert!(ks_distance_to_normal(&shifted) > 0.3);
    }

    #[test]
    fn ols_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (s, i, r2) = ols(&x, &y);
        assert_abs_diff_eq!(s, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(i, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bootstrap_is_seeded() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let a = bootstrap_variance_se(&xs, 200, 4);
        assert_eq!(a, bootstrap_variance_se(&xs, 200, 4));
        assert!(a > 0.0);
    }
}
