//! Price classes on the transformed supply curve.
//!
//! Classes are read off the in-sample mean curve at every multiple of a
//! volume step, so they crowd together where the curve is flat.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use crate::curve::TransformedSnapshot;
use crate::error::{Error, Result};
use crate::units::{MarketBounds, Price, Volume};

/// Prices carrying a strictly positive supply increment in any snapshot.
pub fn collect_price_grid(snapshots: &[TransformedSnapshot]) -> Result<BTreeSet<Price>> {
    if snapshots.is_empty() {
        return Err(Error::EmptyInput("no snapshots for the price grid"));
    }
    Ok(snapshots
        .iter()
        .flat_map(|s| s.supply.bids())
        .filter(|(_, v)| v.is_positive())
        .map(|(p, _)| p)
        .collect())
}

/// Average supply increments over a window.
///
/// Sums are kept exact in volume units; the mean is their quotient by the
/// window length.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurve {
    prices: Vec<Price>,
    totals: Vec<i64>,
    cumulative_totals: Vec<i64>,
    window_len: usize,
}

impl MeanCurve {
    pub fn prices(&self) -> &[Price] {
        &self.prices
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Mean increment V̄(P) in MWh.
    pub fn mean_volume(&self, idx: usize) -> f64 {
        Volume(self.totals[idx]).mwh() / self.window_len as f64
    }

    pub fn mean_volumes(&self) -> Vec<f64> {
        (0..self.prices.len())
            .map(|i| self.mean_volume(i))
            .collect()
    }

    /// Mean cumulative supply at the `idx`-th grid price, in MWh.
    pub fn mean_cumulative(&self, idx: usize) -> f64 {
        Volume(self.cumulative_totals[idx]).mwh() / self.window_len as f64
    }

    pub fn mean_cumulative_at(&self, price: Price) -> f64 {
        let idx = self.prices.partition_point(|p| *p <= price);
        if idx == 0 {
            0.0
        } else {
            self.mean_cumulative(idx - 1)
        }
    }

    pub fn total_mean(&self) -> f64 {
        self.cumulative_totals
            .last()
            .map_or(0.0, |&t| Volume(t).mwh() / self.window_len as f64)
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

pub fn mean_curve(snapshots: &[TransformedSnapshot]) -> Result<MeanCurve> {
    let grid = collect_price_grid(snapshots)?;
    let mut sums: BTreeMap<Price, i64> = grid.into_iter().map(|p| (p, 0)).collect();
    for snap in snapshots {
        for (p, v) in snap.supply.bids() {
            if let Some(s) = sums.get_mut(&p) {
                *s += v.units();
            }
        }
    }
    let (prices, totals): (Vec<Price>, Vec<i64>) = sums.into_iter().unzip();
    let cumulative_totals = totals
        .iter()
        .scan(0i64, |acc, &t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    Ok(MeanCurve {
        prices,
        totals,
        cumulative_totals,
        window_len: snapshots.len(),
    })
}

/// Class bounds at every multiple of `volume_step`, closed with `p_max`.
pub fn derive_classes(
    mean: &MeanCurve,
    volume_step: Volume,
    bounds: &MarketBounds,
) -> Result<Vec<Price>> {
    if !volume_step.is_positive() {
        return Err(Error::InvalidParameter(
            "volume step must be positive".into(),
        ));
    }
    if mean.is_empty() {
        return Err(Error::EmptyInput("mean curve has no prices"));
    }
    // Compare T * cumulative mean against T * i * step in exact integers.
    let scaled_step = volume_step.units() as i128 * mean.window_len as i128;
    let total = *mean.cumulative_totals.last().unwrap() as i128;
    let mut out: Vec<Price> = Vec::new();
    let mut idx = 0usize;
    let mut level = scaled_step;
    while level <= total {
        while (mean.cumulative_totals[idx] as i128) < level {
            idx += 1;
        }
        let price = mean.prices[idx];
        if out.last() != Some(&price) {
            out.push(price);
        }
        // Jump straight past levels that land on the same price.
        let reached = mean.cumulative_totals[idx] as i128;
        level = (reached / scaled_step + 1) * scaled_step;
    }
    if out.last() != Some(&bounds.p_max()) {
        out.push(bounds.p_max());
    }
    if out.len() < 2 {
        return Err(Error::TooFewClasses { classes: out.len() });
    }
    Ok(out)
}

/// The in-sample class structure.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceClassGrid {
    pub prices: Vec<Price>,
    pub mean_volumes: Vec<f64>,
    pub bounds: Vec<Price>,
    pub volume_step: Volume,
}

impl PriceClassGrid {
    pub fn from_snapshots(
        snapshots: &[TransformedSnapshot],
        volume_step: Volume,
        bounds: &MarketBounds,
    ) -> Result<PriceClassGrid> {
        let mean = mean_curve(snapshots)?;
        let class_bounds = derive_classes(&mean, volume_step, bounds)?;
        Ok(PriceClassGrid {
            prices: mean.prices().to_vec(),
            mean_volumes: mean.mean_volumes(),
            bounds: class_bounds,
            volume_step,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.bounds.len()
    }

    /// Index of the class whose half-open bin `(previous bound, bound]` holds `price`.
    pub fn class_of(&self, price: Price) -> Option<usize> {
        let idx = self.bounds.partition_point(|b| *b < price);
        (idx < self.bounds.len()).then_some(idx)
    }

    /// Mean cumulative volume at each class bound, in MWh.
    pub fn mean_cumulative_at_bounds(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|b| {
                self.prices
                    .iter()
                    .zip(&self.mean_volumes)
                    .take_while(|(p, _)| *p <= b)
                    .map(|(_, v)| v)
                    .sum()
            })
            .collect()
    }
}

/// Supply volume per price class plus the inelastic demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVolumeVector {
    pub day: NaiveDate,
    pub hour: u8,
    pub supply_classes: Vec<Volume>,
    pub demand_volume: Volume,
}

pub fn class_volumes(
    snapshot: &TransformedSnapshot,
    grid: &PriceClassGrid,
) -> Result<ClassVolumeVector> {
    let mut classes = vec![Volume::ZERO; grid.n_classes()];
    for (price, volume) in snapshot.supply.bids() {
        if volume == Volume::ZERO {
            continue;
        }
        let c = grid
            .class_of(price)
            .ok_or(Error::VolumeAboveLastBound { price, volume })?;
        classes[c] += volume;
    }
    Ok(ClassVolumeVector {
        day: snapshot.day,
        hour: snapshot.hour,
        supply_classes: classes,
        demand_volume: snapshot.inelastic_demand,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{Side, StepCurve};

    fn b() -> MarketBounds {
        MarketBounds::default()
    }

    fn snap(bids: &[(f64, f64)]) -> TransformedSnapshot {
        TransformedSnapshot {
            day: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
            hour: 0,
            supply: StepCurve::from_bids(bids, Side::Supply, &b()).unwrap(),
            inelastic_demand: Volume::from_mwh(10.0),
        }
    }

    fn eur(ps: &[Price]) -> Vec<f64> {
        ps.iter().map(|p| b().eur(*p)).collect()
    }

    #[test]
    fn price_grid_union_and_positivity() {
        let g = collect_price_grid(&[snap(&[(10.0, 1.0), (20.0, 2.0)])]).unwrap();
        assert_eq!(eur(&g.into_iter().collect::<Vec<_>>()), vec![10.0, 20.0]);
        let g = collect_price_grid(&[snap(&[(10.0, 1.0)]), snap(&[(20.0, 2.0)])]).unwrap();
        assert_eq!(g.len(), 2);
        let g = collect_price_grid(&[snap(&[(10.0, 1.0), (30.0, 0.0)])]).unwrap();
        assert_eq!(eur(&g.into_iter().collect::<Vec<_>>()), vec![10.0]);
        assert!(matches!(collect_price_grid(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn mean_curve_basics() {
        let one = mean_curve(&[snap(&[(10.0, 100.0), (20.0, 50.0)])]).unwrap();
        assert_eq!(one.mean_volumes(), vec![100.0, 50.0]);
        let two = mean_curve(&[snap(&[(10.0, 100.0)]), snap(&[(10.0, 200.0)])]).unwrap();
        assert_eq!(two.mean_volume(0), 150.0);
    }

    #[test]
    fn uniform_curve_gives_one_bound_per_step() {
        let bids: Vec<(f64, f64)> = (0..5).map(|i| (10.0 * i as f64, 500.0)).collect();
        let mean = mean_curve(&[snap(&bids)]).unwrap();
        let bounds = derive_classes(&mean, Volume::from_mwh(500.0), &b()).unwrap();
        assert_eq!(eur(&bounds), vec![0.0, 10.0, 20.0, 30.0, 40.0, 3000.0]);
    }

    #[test]
    fn too_large_step_is_rejected() {
        let mean = mean_curve(&[snap(&[(10.0, 100.0)])]).unwrap();
        let err = derive_classes(&mean, Volume::from_mwh(500.0), &b()).unwrap_err();
        assert!(matches!(err, Error::TooFewClasses { classes: 1 }));
    }

    #[test]
    fn class_binning_is_half_open() {
        let grid = PriceClassGrid {
            prices: vec![],
            mean_volumes: vec![],
            bounds: vec![Price(0), b().p_max()],
            volume_step: Volume::from_mwh(500.0),
        };
        let s = snap(&[(-10.0, 100.0), (10.0, 50.0)]);
        let v = class_volumes(&s, &grid).unwrap();
        assert_eq!(
            v.supply_classes,
            vec![Volume::from_mwh(100.0), Volume::from_mwh(50.0)]
        );
        assert_eq!(v.demand_volume, Volume::from_mwh(10.0));

        let at_bound = snap(&[(0.0, 7.0)]);
        assert_eq!(
            class_volumes(&at_bound, &grid).unwrap().supply_classes[0],
            Volume::from_mwh(7.0)
        );

        let single = PriceClassGrid {
            bounds: vec![b().p_max()],
            ..grid.clone()
        };
        assert_eq!(
            class_volumes(&s, &single).unwrap().supply_classes,
            vec![Volume::from_mwh(150.0)]
        );

        let short = PriceClassGrid {
            bounds: vec![Price(0)],
            ..grid
        };
        assert!(matches!(
            class_volumes(&s, &short),
            Err(Error::VolumeAboveLastBound { .. })
        ));
    }
}
