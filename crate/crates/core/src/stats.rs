//! Small statistical helpers: binomial confidence intervals, goodness-of-fit
//! and homogeneity tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Width of every consistency band, in standard deviations.
pub const CONSISTENCY_SIGMAS: f64 = 4.0;

/// Monte Carlo probability estimate with its 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
    pub rejections: u64,
    pub seed: u64,
}

impl EstimateWithCI {
    pub fn from_counts(rejections: u64, trials: u64, seed: u64) -> Self {
        assert!(trials > 0 && rejections <= trials);
        let (ci_low, ci_high) = wilson_interval(rejections, trials, Z_95);
        Self {
            estimate: rejections as f64 / trials as f64,
            ci_low,
            ci_high,
            trials,
            rejections,
            seed,
        }
    }

    /// Standard deviation implied by the Wilson interval half-width.
    pub fn sigma(&self) -> f64 {
        (self.ci_high - self.ci_low) / (2.0 * Z_95)
    }

    /// True when `value` lies within `CONSISTENCY_SIGMAS` standard deviations.
    pub fn is_consistent_with(&self, value: f64) -> bool {
        (value - self.estimate).abs() <= CONSISTENCY_SIGMAS * self.sigma()
    }

    /// Two independent estimates agree within the combined band.
    pub fn agrees_with(&self, other: &EstimateWithCI) -> bool {
        let sigma = self.sigma().hypot(other.sigma());
        (self.estimate - other.estimate).abs() <= CONSISTENCY_SIGMAS * sigma
    }
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).clamp(0.0, p), (centre + half).clamp(p, 1.0))
}

/// Binomial standard error `sqrt(p(1-p)/n)`.
pub fn binomial_sigma(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
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
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    }
}

/// `P(K > λ)` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-square test of homogeneity on a 2×k table of rejection counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homogeneity {
    pub statistic: f64,
    pub degrees_of_freedom: u64,
    pub p_value: f64,
}

pub fn chi_square_homogeneity(counts: &[(u64, u64)]) -> Homogeneity {
    // counts[i] = (rejections, trials)
    let k = counts.len();
    let total_rej: u64 = counts.iter().map(|c| c.0).sum();
    let total: u64 = counts.iter().map(|c| c.1).sum();
    let df = k.saturating_sub(1) as u64;
    if k < 2 || total_rej == 0 || total_rej == total {
        return Homogeneity {
            statistic: 0.0,
            degrees_of_freedom: df,
            p_value: 1.0,
        };
    }
    let pooled = total_rej as f64 / total as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&(r, n)| {
            let n = n as f64;
            let (er, ea) = (n * pooled, n * (1.0 - pooled));
            let a = n - r as f64;
            (r as f64 - er).powi(2) / er + (a - ea).powi(2) / ea
        })
        .sum();
    let p_value = ChiSquared::new(df as f64)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN);
    Homogeneity {
        statistic,
        degrees_of_freedom: df,
        p_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_estimate() {
        for &(s, n) in &[(0, 10), (10, 10), (3, 7), (1, 1_000_000), (500_000, 1_000_000)] {
            let e = EstimateWithCI::from_counts(s, n, 0);
            assert!(e.ci_low <= e.estimate && e.estimate <= e.ci_high);
            assert!(e.ci_low >= 0.0 && e.ci_high <= 1.0);
        }
    }

    #[test]
    fn wilson_reference_value() {
        // 8 of 10 at 95%: textbook interval (0.4902, 0.9433)
        let (lo, hi) = wilson_interval(8, 10, Z_95);
        assert!((lo - 0.490_16).abs() < 1e-4);
        assert!((hi - 0.943_32).abs() < 1e-4);
    }

    #[test]
    fn wilson_sigma_tracks_binomial_sigma_for_large_n() {
        let e = EstimateWithCI::from_counts(100_000, 1_000_000, 0);
        let s = binomial_sigma(0.1, 1_000_000);
        assert!((e.sigma() - s).abs() / s < 1e-3);
    }

    #[test]
    fn ks_detects_wrong_law() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_test(&xs, |x| x.clamp(0.0, 1.0)).p_value > 0.99);
        assert!(ks_test(&xs, |x| (x * x).clamp(0.0, 1.0)).p_value < 1e-6);
    }

    #[test]
    fn chi_square_flags_inhomogeneity() {
        let same = chi_square_homogeneity(&[(100, 1000), (104, 1000), (97, 1000)]);
        assert!(same.p_value > 0.5);
        assert_eq!(same.degrees_of_freedom, 2);
        let diff = chi_square_homogeneity(&[(100, 1000), (200, 1000)]);
        assert!(diff.p_value < 1e-6);
        assert_eq!(chi_square_homogeneity(&[(0, 10), (0, 10)]).p_value, 1.0);
    }
}
