//! Diebold-Mariano test of equal predictive accuracy under absolute loss.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const MIN_DM_LENGTH: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub lag: usize,
    /// The loss differential had no variance.
    pub degenerate: bool,
}

/// Bartlett-weighted long-run variance with `lag` autocovariances.
pub fn hac_variance(d: &[f64], lag: usize) -> f64 {
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let gamma = |l: usize| -> f64 {
        d[l..]
            .iter()
            .zip(d)
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / n
    };
    let mut v = gamma(0);
    for l in 1..=lag.min(d.len() - 1) {
        v += 2.0 * (1.0 - l as f64 / (lag as f64 + 1.0)) * gamma(l);
    }
    v
}

/// Negative statistics favour `a`.
pub fn dm_test(errors_a: &[f64], errors_b: &[f64]) -> Result<DmResult> {
    if errors_a.len() != errors_b.len() {
        return Err(Error::InvalidParameter(
            "error series differ in length".into(),
        ));
    }
    let n = errors_a.len();
    if n < MIN_DM_LENGTH {
        return Err(Error::InvalidParameter(format!(
            "the DM test needs at least {MIN_DM_LENGTH} errors, got {n}"
        )));
    }
    let d: Vec<f64> = errors_a
        .iter()
        .zip(errors_b)
        .map(|(a, b)| a.abs() - b.abs())
        .collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let lag = (n as f64).cbrt().floor() as usize;
    let var = hac_variance(&d, lag);
    let scale = d
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    if !(var > 1e-24 * scale * scale) {
        let p_value = if mean == 0.0 { 1.0 } else { 0.0 };
        let statistic = if mean == 0.0 {
            0.0
        } else {
            mean.signum() * f64::INFINITY
        };
        return Ok(DmResult {
            statistic,
            p_value,
            n,
            lag,
            degenerate: true,
        });
    }
    let statistic = mean / (var / n as f64).sqrt();
    let normal = Normal::standard();
    Ok(DmResult {
        statistic,
        p_value: 2.0 * (1.0 - normal.cdf(statistic.abs())),
        n,
        lag,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_series_are_degenerate() {
        let e: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let r = dm_test(&e, &e).unwrap();
        assert!(r.degenerate);
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn constant_gap_is_degenerate_with_zero_p() {
        let a = vec![2.0; 40];
        let b = vec![1.0; 40];
        let r = dm_test(&a, &b).unwrap();
        assert!(r.degenerate && r.p_value == 0.0);
    }

    #[test]
    fn swapping_negates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..100).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ab = dm_test(&a, &b).unwrap();
        let ba = dm_test(&b, &a).unwrap();
        assert_eq!(ab.statistic, -ba.statistic);
        assert_eq!(ab.p_value, ba.p_value);
        assert_eq!(ab.lag, 4);
    }

    #[test]
    fn truncation_lag_and_short_input() {
        assert!(dm_test(&[1.0; 29], &[0.0; 29]).is_err());
        assert_eq!(
            dm_test(&vec![1.0; 27 * 2], &vec![1.0; 27 * 2]).unwrap().lag,
            3
        );
    }

    #[test]
    fn white_noise_variance_is_sample_variance() {
        let d = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(hac_variance(&d, 0), 1.0);
        // gamma(1) = -3/4, Bartlett weight 1/2.
        assert!((hac_variance(&d, 1) - (1.0 - 0.75)).abs() < 1e-15);
    }
}
