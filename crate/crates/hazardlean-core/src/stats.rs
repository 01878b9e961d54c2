//! Small statistical utilities shared by estimators, study drivers, and
//! tests: the standard normal cdf, Kolmogorov-Smirnov distances, and basic
//! summaries.

use crate::scalar::Real;

/// Standard normal cumulative distribution function.
///
/// Uses the Abramowitz-Stegun 26.2.17 polynomial approximation; absolute
/// error below 7.5e-8, which is ample for p-values and test summaries.
pub fn normal_cdf<T: Real>(x: T) -> T {
    let ax = x.abs();
    let t = T::one() / (T::one() + T::of(0.2316419) * ax);
    let poly = t
        * (T::of(0.319381530)
            + t * (T::of(-0.356563782)
                + t * (T::of(1.781477937) + t * (T::of(-1.821255978) + t * T::of(1.330274429)))));
    let pdf = (-ax * ax / T::of(2.0)).exp() / (T::of(2.0) * T::PI()).sqrt();
    let upper = pdf * poly;
    if x >= T::zero() {
        T::one() - upper
    } else {
        upper
    }
}

/// Two-sided p-value for a standard normal statistic.
pub fn normal_two_sided_pvalue<T: Real>(z: T) -> T {
    (T::of(2.0) * (T::one() - normal_cdf(z.abs()))).min(T::one())
}

/// Kolmogorov-Smirnov distance between a sample and a reference cdf.
/// Sorts a copy of the data; NaNs are rejected by the caller's data model.
pub fn ks_statistic<T: Real, F: Fn(T) -> T>(data: &[T], cdf: F) -> T {
    assert!(!data.is_empty(), "ks distance needs data");
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("ks data must be comparable"));
    let n = T::from_usize(sorted.len()).expect("sample size fits scalar");
    let mut d = T::zero();
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = T::from_usize(i).expect("index fits scalar") / n;
        let hi = T::from_usize(i + 1).expect("index fits scalar") / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Kolmogorov-Smirnov distance from the uniform law on [0, 1].
pub fn ks_uniform<T: Real>(data: &[T]) -> T {
    ks_statistic(data, |x| x.clamp(T::zero(), T::one()))
}

/// Sample mean.
pub fn mean<T: Real>(data: &[T]) -> T {
    assert!(!data.is_empty(), "mean needs data");
    data.iter().copied().sum::<T>() / T::from_usize(data.len()).expect("size fits scalar")
}

/// Unbiased sample standard deviation (n - 1 denominator).
pub fn sample_sd<T: Real>(data: &[T]) -> T {
    assert!(data.len() >= 2, "sd needs at least two points");
    let m = mean(data);
    let ss: T = data.iter().map(|&x| (x - m) * (x - m)).sum();
    (ss / T::from_usize(data.len() - 1).expect("size fits scalar")).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn empirical_quantile<T: Real>(data: &[T], p: T) -> T {
    assert!(!data.is_empty(), "quantile needs data");
    assert!(p >= T::zero() && p <= T::one(), "level must lie in [0, 1]");
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("quantile data must be comparable"));
    let n = sorted.len();
    let pos = p * T::from_usize(n - 1).expect("size fits scalar");
    let lo = pos.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let w = pos - pos.floor();
    sorted[lo] * (T::one() - w) + sorted[hi] * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_cdf_matches_frozen_reference_values() {
        assert_abs_diff_eq!(normal_cdf(0.0f64), 0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_cdf(1.0f64), 0.8413447460685429, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_cdf(-1.0f64), 0.15865525393145707, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_cdf(1.959963984540054f64), 0.975, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_cdf(-2.3263478740408408f64), 0.01, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_cdf(4.0f64), 0.9999683287581669, epsilon = 1e-7);
    }

    #[test]
    fn two_sided_pvalue_is_symmetric() {
        assert_abs_diff_eq!(
            normal_two_sided_pvalue(1.959963984540054f64),
            0.05,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            normal_two_sided_pvalue(-1.959963984540054f64),
            0.05,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(normal_two_sided_pvalue(0.0f64), 1.0, epsilon = 1e-7);
    }

    #[test]
    fn ks_distance_detects_shifts_and_accepts_the_truth() {
        let n = 2000;
        let unif: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_uniform(&unif) < 0.001);
        let shifted: Vec<f64> = unif.iter().map(|u| u * 0.8).collect();
        assert!(ks_uniform(&shifted) > 0.15);
    }

    #[test]
    fn summaries_match_hand_computed_values() {
        let xs = [1.0f64, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(mean(&xs), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sample_sd(&xs), (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(empirical_quantile(&xs, 0.5), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(empirical_quantile(&xs, 0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(empirical_quantile(&xs, 1.0), 4.0, epsilon = 1e-15);
    }
}
