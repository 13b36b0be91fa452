use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Generator for one delivery hour. Streams are keyed by date and hour so the
/// draws do not depend on the order hours are processed in.
pub fn hour_stream(seed: u64, day: NaiveDate, hour: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(day.num_days_from_ce() as u64 * 24 + hour as u64);
    rng
}

/// Mean of `samples` perturbed forecasts. Each draw picks one day and adds that
/// day's residual for every target, so cross-target dependence is kept.
///
/// `residuals[m][d]` is the residual of target `m` on day `d`.
pub fn bootstrap_mean(
    point: &[f64],
    residuals: &[&[f64]],
    samples: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::InvalidParameter(
            "bootstrap needs at least one sample".into(),
        ));
    }
    if residuals.len() != point.len() {
        return Err(Error::InvalidParameter(
            "one residual series per target is required".into(),
        ));
    }
    let n_days = residuals.first().map_or(0, |r| r.len());
    if n_days == 0 || residuals.iter().any(|r| r.len() != n_days) {
        return Err(Error::InvalidParameter(
            "residual series must share a non-empty day range".into(),
        ));
    }
    let mut counts = vec![0u32; n_days];
    for _ in 0..samples {
        counts[rng.random_range(0..n_days)] += 1;
    }
    let b = samples as f64;
    Ok(point
        .iter()
        .zip(residuals)
        .map(|(p, r)| {
            let shift: f64 = counts
                .iter()
                .zip(r.iter())
                .map(|(&c, e)| f64::from(c) * e)
                .sum();
            p + shift / b
        })
        .collect())
}
