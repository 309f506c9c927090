//! Median, MAD and the modified z-score outlier test.

use serde::{Deserialize, Serialize};

/// Median of a nonempty slice (mean of the two middle values for even
/// length). Sorts the slice in place.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty set");
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn median(values: &[f64]) -> f64 {
    median_in_place(&mut values.to_vec())
}

/// Median and median absolute deviation.
pub fn median_mad(values: &[f64]) -> (f64, f64) {
    let med = median(values);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    (med, median_in_place(&mut dev))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierTestConfig {
    /// Threshold `D` on the modified z-score.
    pub threshold: f64,
    /// Ratio between standard deviation and MAD (1.4826 for normal data).
    pub consistency: f64,
}

impl Default for OutlierTestConfig {
    fn default() -> Self {
        OutlierTestConfig {
            threshold: 3.5,
            consistency: 1.4826,
        }
    }
}

/// Modified z-score `|x - med| / (consistency * mad)`; zero when `mad == 0`.
pub fn modified_z(x: f64, med: f64, mad: f64, cfg: &OutlierTestConfig) -> f64 {
    if mad == 0.0 {
        return 0.0;
    }
    ((x - med) / (cfg.consistency * mad)).abs()
}

/// True iff `x` is an outlier with respect to `samples`.
pub fn mad_outlier_test(x: f64, samples: &[f64], cfg: &OutlierTestConfig) -> bool {
    let (med, mad) = median_mad(samples);
    modified_z(x, med, mad, cfg) > cfg.threshold
}

/// Flags every member of `samples` that fails the test against the whole set.
pub fn mad_outlier_flags(samples: &[f64], cfg: &OutlierTestConfig) -> Vec<bool> {
    let (med, mad) = median_mad(samples);
    samples
        .iter()
        .map(|&x| modified_z(x, med, mad, cfg) > cfg.threshold)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_and_even_medians() {
        assert_eq!(median(&[1.0, 2.0, 100.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn outlier_test_around_the_bound() {
        let cfg = OutlierTestConfig::default();
        let samples: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(median_mad(&samples), (5.0, 2.0));
        assert!(!mad_outlier_test(5.0, &samples, &cfg));
        assert!(!mad_outlier_test(5.0 + 5.189 * 2.0, &samples, &cfg));
        assert!(mad_outlier_test(5.0 + 5.20 * 2.0, &samples, &cfg));
        assert!((modified_z(15.4, 5.0, 2.0, &cfg) - 10.4 / 2.9652).abs() < 1e-12);
    }

    #[test]
    fn zero_mad_never_flags() {
        let cfg = OutlierTestConfig::default();
        assert!(!mad_outlier_test(1e9, &[1.0, 1.0, 1.0], &cfg));
        assert_eq!(mad_outlier_flags(&[2.0; 4], &cfg), vec![false; 4]);
    }
}
