//! Rebuilding a transformed supply curve from class forecasts.

use std::collections::{BTreeMap, BTreeSet};

use crate::classes::PriceClassGrid;
use crate::curve::{intersect, DemandSide, Side, StepCurve, TransformedSnapshot};
use crate::error::{Error, Result};
use crate::units::{MarketBounds, Price, Volume};

/// Prices bid with positive volume in at least two hours of the latest day.
pub fn compute_r(snapshots: &[TransformedSnapshot]) -> BTreeSet<Price> {
    let Some(last) = snapshots.iter().map(|s| s.day).max() else {
        return BTreeSet::new();
    };
    let mut hours: BTreeMap<Price, BTreeSet<u8>> = BTreeMap::new();
    for s in snapshots.iter().filter(|s| s.day == last) {
        for (price, volume) in s.supply.bids() {
            if volume.is_positive() {
                hours.entry(price).or_default().insert(s.hour);
            }
        }
    }
    hours
        .into_iter()
        .filter(|(_, h)| h.len() >= 2)
        .map(|(p, _)| p)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionWeights {
    /// Per class: `(price, R(P) * mean volume)` for every grid price in the class.
    pub classes: Vec<Vec<(Price, f64)>>,
    pub normalizers: Vec<f64>,
    pub class_bounds: Vec<Price>,
}

impl ReconstructionWeights {
    pub fn new(grid: &PriceClassGrid, active: &BTreeSet<Price>) -> Result<ReconstructionWeights> {
        let mut classes = vec![Vec::new(); grid.n_classes()];
        for (&price, &mean) in grid.prices.iter().zip(&grid.mean_volumes) {
            let c = grid.class_of(price).ok_or(Error::VolumeAboveLastBound {
                price,
                volume: Volume::from_mwh(mean),
            })?;
            let r = f64::from(u8::from(active.contains(&price)));
            classes[c].push((price, r * mean));
        }
        let normalizers = classes
            .iter()
            .map(|c| c.iter().map(|(_, w)| w).sum())
            .collect();
        Ok(ReconstructionWeights {
            classes,
            normalizers,
            class_bounds: grid.bounds.clone(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub supply: StepCurve,
    /// Per class, the clipped and quantized forecast that was distributed.
    pub class_mass: Vec<Volume>,
    /// Number of negative class forecasts clipped to zero.
    pub clip_count: usize,
    /// Classes whose mass went to the class bound for lack of weights.
    pub fallback_classes: Vec<usize>,
}

/// Splits `units` over `weights` so the parts sum to `units` exactly.
///
/// Rounds the cumulative share instead of each part, so the parts are
/// non-negative and the last cumulative value is `units` by construction.
fn split_units(units: i64, weights: &[f64], total: f64) -> Vec<i64> {
    let mut parts = Vec::with_capacity(weights.len());
    let mut cum_w = 0.0;
    let mut prev = 0i64;
    for (i, w) in weights.iter().enumerate() {
        cum_w += w;
        let cum = if i + 1 == weights.len() {
            units
        } else {
            ((units as f64 * cum_w / total).round() as i64).clamp(prev, units)
        };
        parts.push(cum - prev);
        prev = cum;
    }
    parts
}

pub fn reconstruct_supply(
    forecasts: &[f64],
    weights: &ReconstructionWeights,
    bounds: &MarketBounds,
) -> Result<Reconstruction> {
    if forecasts.len() != weights.n_classes() {
        return Err(Error::InvalidParameter(format!(
            "{} class forecasts for {} classes",
            forecasts.len(),
            weights.n_classes()
        )));
    }
    let mut bids = Vec::new();
    let mut class_mass = Vec::with_capacity(forecasts.len());
    let mut clip_count = 0;
    let mut fallback_classes = Vec::new();
    for (c, &f) in forecasts.iter().enumerate() {
        if !f.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "class {c} forecast is not finite"
            )));
        }
        if f < 0.0 {
            clip_count += 1;
        }
        let mass = Volume::from_mwh(f.max(0.0));
        class_mass.push(mass);
        if mass == Volume::ZERO {
            continue;
        }
        let norm = weights.normalizers[c];
        if norm > 0.0 {
            let class = &weights.classes[c];
            let w: Vec<f64> = class.iter().map(|(_, w)| *w).collect();
            let parts = split_units(mass.units(), &w, norm);
            bids.extend(
                class
                    .iter()
                    .zip(parts)
                    .filter(|(_, u)| *u > 0)
                    .map(|((p, _), u)| (*p, Volume(u))),
            );
        } else {
            fallback_classes.push(c);
            bids.push((weights.class_bounds[c], mass));
        }
    }
    let supply = StepCurve::from_tick_bids(bids, Side::Supply, bounds)?;
    debug_assert!(StepCurve::from_points(supply.points().to_vec(), Side::Supply, bounds).is_ok());
    Ok(Reconstruction {
        supply,
        class_mass,
        clip_count,
        fallback_classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquilibriumForecast {
    pub price: Price,
    pub volume: Volume,
    /// Supply never covered the demand; the price sits at the cap.
    pub capped: bool,
    pub demand_clipped: bool,
}

pub fn forecast_equilibrium(
    supply: &StepCurve,
    demand: f64,
    bounds: &MarketBounds,
) -> Result<EquilibriumForecast> {
    if !demand.is_finite() {
        return Err(Error::InvalidParameter(
            "demand forecast is not finite".into(),
        ));
    }
    let demand_clipped = demand < 0.0;
    let d = Volume::from_mwh(demand.max(0.0));
    if d == Volume::ZERO {
        let price = supply
            .points()
            .iter()
            .find(|(_, v)| v.is_positive())
            .map_or(bounds.p_min(), |(p, _)| *p);
        return Ok(EquilibriumForecast {
            price,
            volume: Volume::ZERO,
            capped: false,
            demand_clipped,
        });
    }
    match intersect(supply, DemandSide::Inelastic(d), bounds) {
        Ok(eq) => Ok(EquilibriumForecast {
            price: eq.price,
            volume: eq.volume,
            capped: false,
            demand_clipped,
        }),
        Err(Error::NoEquilibrium) => Ok(EquilibriumForecast {
            price: bounds.p_max(),
            volume: supply.total(),
            capped: true,
            demand_clipped,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn b() -> MarketBounds {
        MarketBounds::default()
    }

    fn p(eur: f64) -> Price {
        b().price(eur).unwrap()
    }

    fn snap(hour: u8, day: u32, bids: &[(f64, f64)]) -> TransformedSnapshot {
        TransformedSnapshot {
            day: NaiveDate::from_ymd_opt(2017, 5, day).unwrap(),
            hour,
            supply: StepCurve::from_bids(bids, Side::Supply, &b()).unwrap(),
            inelastic_demand: Volume::from_mwh(10.0),
        }
    }

    fn weights(classes: Vec<Vec<(Price, f64)>>, class_bounds: Vec<Price>) -> ReconstructionWeights {
        let normalizers = classes
            .iter()
            .map(|c| c.iter().map(|(_, w)| w).sum())
            .collect();
        ReconstructionWeights {
            classes,
            normalizers,
            class_bounds,
        }
    }

    #[test]
    fn r_counts_hours_on_the_latest_day() {
        let mut snaps: Vec<_> = (0..24).map(|h| snap(h, 2, &[(10.0, 5.0)])).collect();
        snaps.push(snap(3, 2, &[(10.0, 5.0), (20.0, 1.0)]));
        snaps.push(snap(0, 1, &[(30.0, 1.0)]));
        snaps.push(snap(1, 1, &[(30.0, 1.0)]));
        let r = compute_r(&snaps);
        assert!(r.contains(&p(10.0)));
        assert!(!r.contains(&p(20.0)));
        // Only the earlier day carries 30.
        assert!(!r.contains(&p(30.0)));
        assert!(!r.contains(&p(40.0)));
    }

    #[test]
    fn single_active_price_takes_everything() {
        let w = weights(vec![vec![(p(25.0), 7.0)]], vec![p(25.0)]);
        let rec = reconstruct_supply(&[123.4], &w, &b()).unwrap();
        assert_eq!(rec.supply.points(), &[(p(25.0), Volume::from_mwh(123.4))]);
    }

    #[test]
    fn proportional_split() {
        let w = weights(
            vec![vec![(p(10.0), 100.0), (p(20.0), 300.0)]],
            vec![p(20.0)],
        );
        let rec = reconstruct_supply(&[200.0], &w, &b()).unwrap();
        assert_eq!(
            rec.supply.bids(),
            vec![
                (p(10.0), Volume::from_mwh(50.0)),
                (p(20.0), Volume::from_mwh(150.0))
            ]
        );
    }

    #[test]
    fn negative_forecast_is_clipped_and_zero_weights_fall_back() {
        let w = weights(
            vec![vec![(p(10.0), 1.0)], vec![(p(15.0), 0.0), (p(18.0), 0.0)]],
            vec![p(10.0), p(20.0)],
        );
        let rec = reconstruct_supply(&[-5.0, 40.0], &w, &b()).unwrap();
        assert_eq!(rec.clip_count, 1);
        assert_eq!(rec.fallback_classes, vec![1]);
        assert_eq!(rec.supply.bids(), vec![(p(20.0), Volume::from_mwh(40.0))]);
    }

    #[test]
    fn equilibrium_examples() {
        let s = StepCurve::from_bids(&[(10.0, 100.0)], Side::Supply, &b()).unwrap();
        let e = forecast_equilibrium(&s, 50.0, &b()).unwrap();
        assert_eq!(
            (e.price, e.volume, e.capped),
            (p(10.0), Volume::from_mwh(50.0), false)
        );
        let zero = forecast_equilibrium(&s, 0.0, &b()).unwrap();
        assert_eq!((zero.price, zero.volume), (p(10.0), Volume::ZERO));
        let neg = forecast_equilibrium(&s, -3.0, &b()).unwrap();
        assert!(neg.demand_clipped);
        let cap = forecast_equilibrium(&s, 150.0, &b()).unwrap();
        assert_eq!(
            (cap.price, cap.volume, cap.capped),
            (b().p_max(), Volume::from_mwh(100.0), true)
        );
    }

    #[test]
    fn split_is_exact() {
        assert_eq!(split_units(10, &[1.0, 1.0, 1.0], 3.0), vec![3, 4, 3]);
        assert_eq!(split_units(1, &[0.0, 2.0], 2.0), vec![0, 1]);
        assert_eq!(split_units(7, &[2.0, 0.0], 2.0), vec![7, 0]);
    }
}
