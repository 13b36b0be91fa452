//! Auction step curves, the inelastic-demand transform and equilibrium search.
//!
//! Curves store cumulative volume against tick prices. Evaluation is
//! right-continuous on both sides: the value at a price is the volume of the
//! last breakpoint at or below it. The convention lives entirely in
//! [`StepCurve::value_at`].

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::units::{MarketBounds, Price, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Supply,
    Demand,
}

impl Side {
    pub fn code(self) -> char {
        match self {
            Side::Supply => 'S',
            Side::Demand => 'D',
        }
    }
}

/// Monotone cumulative-volume step function of price.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepCurve {
    side: Side,
    points: Vec<(Price, Volume)>,
}

impl StepCurve {
    /// Aggregates a bid ladder into a cumulative curve.
    ///
    /// Bids at the same price are merged. Supply accumulates upward in price,
    /// demand accumulates downward.
    pub fn from_bids(bids: &[(f64, f64)], side: Side, bounds: &MarketBounds) -> Result<StepCurve> {
        let mut ladder = Vec::with_capacity(bids.len());
        for &(price, volume) in bids {
            if !(volume >= 0.0) {
                return Err(Error::NegativeVolume { price, volume });
            }
            ladder.push((bounds.price(price)?, Volume::from_mwh(volume)));
        }
        StepCurve::from_tick_bids(ladder, side, bounds)
    }

    /// Like [`StepCurve::from_bids`] but for already quantized bids.
    pub fn from_tick_bids(
        bids: impl IntoIterator<Item = (Price, Volume)>,
        side: Side,
        bounds: &MarketBounds,
    ) -> Result<StepCurve> {
        let mut merged: BTreeMap<Price, Volume> = BTreeMap::new();
        for (price, volume) in bids {
            bounds.check(price)?;
            if volume < Volume::ZERO {
                return Err(Error::NegativeVolume {
                    price: bounds.eur(price),
                    volume: volume.mwh(),
                });
            }
            *merged.entry(price).or_default() += volume;
        }
        let mut points: Vec<(Price, Volume)> = merged.into_iter().collect();
        match side {
            Side::Supply => {
                let mut acc = Volume::ZERO;
                for p in points.iter_mut() {
                    acc += p.1;
                    p.1 = acc;
                }
            }
            Side::Demand => {
                let mut acc = Volume::ZERO;
                for p in points.iter_mut().rev() {
                    acc += p.1;
                    p.1 = acc;
                }
            }
        }
        Ok(StepCurve { side, points })
    }

    /// Builds a curve from cumulative breakpoints, validating every invariant.
    pub fn from_points(
        points: Vec<(Price, Volume)>,
        side: Side,
        bounds: &MarketBounds,
    ) -> Result<StepCurve> {
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidCurve(format!(
                    "prices not strictly increasing at tick {}",
                    w[1].0.ticks()
                )));
            }
            let ok = match side {
                Side::Supply => w[1].1 >= w[0].1,
                Side::Demand => w[1].1 <= w[0].1,
            };
            if !ok {
                return Err(Error::InvalidCurve(format!(
                    "{side:?} volume not monotone at tick {}",
                    w[1].0.ticks()
                )));
            }
        }
        for &(price, volume) in &points {
            bounds.check(price)?;
            if volume < Volume::ZERO {
                return Err(Error::InvalidCurve(format!(
                    "negative cumulative volume at tick {}",
                    price.ticks()
                )));
            }
        }
        Ok(StepCurve { side, points })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn points(&self) -> &[(Price, Volume)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Step evaluation without range checks.
    pub fn value_at(&self, price: Price) -> Volume {
        let idx = self.points.partition_point(|&(p, _)| p <= price);
        if idx == 0 {
            match self.side {
                Side::Supply => Volume::ZERO,
                Side::Demand => self.points.first().map_or(Volume::ZERO, |p| p.1),
            }
        } else {
            self.points[idx - 1].1
        }
    }

    pub fn eval(&self, price: Price, bounds: &MarketBounds) -> Result<Volume> {
        bounds.check(price)?;
        Ok(self.value_at(price))
    }

    /// Volume at the top of the curve (supply) or bottom (demand).
    pub fn total(&self) -> Volume {
        match self.side {
            Side::Supply => self.points.last().map_or(Volume::ZERO, |p| p.1),
            Side::Demand => self.points.first().map_or(Volume::ZERO, |p| p.1),
        }
    }

    /// Per-price bid volumes that reproduce the curve; zero-volume steps included.
    pub fn bids(&self) -> Vec<(Price, Volume)> {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (p, v) = self.points[i];
                let delta = match self.side {
                    Side::Supply if i == 0 => v,
                    Side::Supply => v - self.points[i - 1].1,
                    Side::Demand if i + 1 == n => v,
                    Side::Demand => v - self.points[i + 1].1,
                };
                (p, delta)
            })
            .collect()
    }

    /// Pointwise average of two same-side curves, rounded to volume resolution.
    pub fn average(a: &StepCurve, b: &StepCurve) -> Result<StepCurve> {
        if a.side != b.side {
            return Err(Error::InvalidCurve(
                "cannot average supply with demand".into(),
            ));
        }
        let points = merged_prices(a, b)
            .into_iter()
            .map(|p| {
                let sum = a.value_at(p).units() + b.value_at(p).units();
                (p, Volume(sum.div_euclid(2) + (sum.rem_euclid(2))))
            })
            .collect();
        // Rounding half-up on both sides keeps monotonicity.
        Ok(StepCurve {
            side: a.side,
            points,
        })
    }
}

fn merged_prices(a: &StepCurve, b: &StepCurve) -> Vec<Price> {
    let mut prices: Vec<Price> = a.points.iter().chain(&b.points).map(|p| p.0).collect();
    prices.sort_unstable();
    prices.dedup();
    prices
}

/// One hourly auction: raw supply and demand curves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuctionSnapshot {
    pub day: NaiveDate,
    pub hour: u8,
    pub supply: StepCurve,
    pub demand: StepCurve,
}

impl AuctionSnapshot {
    pub fn new(
        day: NaiveDate,
        hour: u8,
        supply: StepCurve,
        demand: StepCurve,
    ) -> Result<AuctionSnapshot> {
        if hour > 23 {
            return Err(Error::InvalidParameter(format!(
                "hour {hour} outside 0..=23"
            )));
        }
        if supply.side != Side::Supply || demand.side != Side::Demand {
            return Err(Error::InvalidCurve(
                "snapshot curves have the wrong sides".into(),
            ));
        }
        Ok(AuctionSnapshot {
            day,
            hour,
            supply,
            demand,
        })
    }

    pub fn equilibrium(&self, bounds: &MarketBounds) -> Result<Equilibrium> {
        intersect(&self.supply, DemandSide::Curve(&self.demand), bounds)
    }
}

/// The same auction with all demand elasticity folded into supply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformedSnapshot {
    pub day: NaiveDate,
    pub hour: u8,
    pub supply: StepCurve,
    pub inelastic_demand: Volume,
}

/// Rewrites a snapshot so that demand is a vertical line.
///
/// The inelastic volume is the full demand at the price floor. At every price
/// `z`, the new supply is `supply(z) + demand(p_min) - demand(z)`, so supply
/// meets the constant demand exactly where the raw curves cross.
pub fn transform(snapshot: &AuctionSnapshot, bounds: &MarketBounds) -> Result<TransformedSnapshot> {
    let AuctionSnapshot { supply, demand, .. } = snapshot;
    let floor_demand = demand.value_at(bounds.p_min());
    let mut points = Vec::with_capacity(supply.points.len() + demand.points.len());
    let mut prev = Volume::ZERO;
    for z in merged_prices(supply, demand) {
        let v = supply.value_at(z) + floor_demand - demand.value_at(z);
        if v < prev || v < Volume::ZERO {
            return Err(Error::NonMonotoneTransform(z));
        }
        prev = v;
        points.push((z, v));
    }
    Ok(TransformedSnapshot {
        day: snapshot.day,
        hour: snapshot.hour,
        supply: StepCurve {
            side: Side::Supply,
            points,
        },
        inelastic_demand: floor_demand,
    })
}

#[derive(Debug, Clone, Copy)]
pub enum DemandSide<'a> {
    Curve(&'a StepCurve),
    Inelastic(Volume),
}

impl DemandSide<'_> {
    fn value_at(&self, price: Price) -> Volume {
        match self {
            DemandSide::Curve(c) => c.value_at(price),
            DemandSide::Inelastic(v) => *v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Equilibrium {
    pub price: Price,
    pub volume: Volume,
}

/// Lowest tick price at which supply covers demand.
///
/// Both curves are constant between breakpoints, so only the price floor and
/// the breakpoints need to be inspected.
pub fn intersect(
    supply: &StepCurve,
    demand: DemandSide<'_>,
    bounds: &MarketBounds,
) -> Result<Equilibrium> {
    let mut candidates: Vec<Price> = supply.points.iter().map(|p| p.0).collect();
    if let DemandSide::Curve(d) = demand {
        candidates.extend(d.points.iter().map(|p| p.0));
    }
    candidates.push(bounds.p_min());
    candidates.retain(|p| bounds.contains(*p));
    candidates.sort_unstable();
    candidates.dedup();

    for price in candidates {
        let s = supply.value_at(price);
        let d = demand.value_at(price);
        if s >= d {
            return Ok(Equilibrium {
                price,
                volume: s.min(d),
            });
        }
    }
    Err(Error::NoEquilibrium)
}
