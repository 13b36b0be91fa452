//! Tick-quantized prices and fixed-precision volumes.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Volumes are stored as integer multiples of this many MWh.
pub const VOLUME_RESOLUTION_MWH: f64 = 0.1;

/// A price expressed as an integer number of exchange ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Price(pub i64);

/// A volume in units of [`VOLUME_RESOLUTION_MWH`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Volume(pub i64);

impl Volume {
    pub const ZERO: Volume = Volume(0);

    /// Rounds to the nearest representable volume.
    pub fn from_mwh(mwh: f64) -> Volume {
        Volume((mwh / VOLUME_RESOLUTION_MWH).round() as i64)
    }

    pub fn mwh(self) -> f64 {
        self.0 as f64 * VOLUME_RESOLUTION_MWH
    }

    pub fn units(self) -> i64 {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl Add for Volume {
    type Output = Volume;
    fn add(self, rhs: Volume) -> Volume {
        Volume(self.0 + rhs.0)
    }
}

impl Sub for Volume {
    type Output = Volume;
    fn sub(self, rhs: Volume) -> Volume {
        Volume(self.0 - rhs.0)
    }
}

impl Neg for Volume {
    type Output = Volume;
    fn neg(self) -> Volume {
        Volume(-self.0)
    }
}

impl AddAssign for Volume {
    fn add_assign(&mut self, rhs: Volume) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Volume {
    fn sub_assign(&mut self, rhs: Volume) {
        self.0 -= rhs.0;
    }
}

impl Sum for Volume {
    fn sum<I: Iterator<Item = Volume>>(iter: I) -> Volume {
        Volume(iter.map(|v| v.0).sum())
    }
}

impl fmt::Display for Volume {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{}", abs / 10, abs % 10)
    }
}

impl Price {
    pub fn ticks(self) -> i64 {
        self.0
    }

    pub fn next(self) -> Price {
        Price(self.0 + 1)
    }
}

/// Exchange price limits and tick size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketBounds {
    p_min: Price,
    p_max: Price,
    tick: f64,
}

impl MarketBounds {
    pub fn new(p_min: f64, p_max: f64, tick: f64) -> Result<MarketBounds> {
        if !(tick > 0.0) || !tick.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tick must be positive, got {tick}"
            )));
        }
        if !(p_min < p_max) {
            return Err(Error::InvalidParameter(format!(
                "p_min ({p_min}) must be below p_max ({p_max})"
            )));
        }
        let lo = (p_min / tick).round();
        let hi = (p_max / tick).round();
        let on_grid = |p: f64, t: f64| ((p / tick) - t).abs() < 1e-6;
        if !on_grid(p_min, lo) || !on_grid(p_max, hi) {
            return Err(Error::InvalidParameter(format!(
                "price limits {p_min}/{p_max} are not multiples of the tick {tick}"
            )));
        }
        Ok(MarketBounds {
            p_min: Price(lo as i64),
            p_max: Price(hi as i64),
            tick,
        })
    }

    pub fn p_min(&self) -> Price {
        self.p_min
    }

    pub fn p_max(&self) -> Price {
        self.p_max
    }

    pub fn tick(&self) -> f64 {
        self.tick
    }

    /// Quantizes a EUR/MWh price to the tick grid, rejecting values outside the limits.
    pub fn price(&self, eur: f64) -> Result<Price> {
        let p = Price((eur / self.tick).round() as i64);
        if !eur.is_finite() || !self.contains(p) {
            return Err(Error::PriceOutOfBounds {
                price: eur,
                p_min: self.eur(self.p_min),
                p_max: self.eur(self.p_max),
            });
        }
        Ok(p)
    }

    /// Shifts a price by a EUR amount, clamped to the limits.
    pub fn offset(&self, base: Price, eur: f64) -> Price {
        let shifted = base.0 + (eur / self.tick).round() as i64;
        Price(shifted.clamp(self.p_min.0, self.p_max.0))
    }

    pub fn eur(&self, price: Price) -> f64 {
        // Round-trips through the tick count so 0.1-tick prices print cleanly.
        let raw = price.0 as f64 * self.tick;
        (raw * 1e9).round() / 1e9
    }

    pub fn contains(&self, price: Price) -> bool {
        price >= self.p_min && price <= self.p_max
    }

    pub fn check(&self, price: Price) -> Result<()> {
        if self.contains(price) {
            Ok(())
        } else {
            Err(Error::PriceOutOfBounds {
                price: self.eur(price),
                p_min: self.eur(self.p_min),
                p_max: self.eur(self.p_max),
            })
        }
    }

    /// Every tick in `[p_min, p_max]`.
    pub fn ticks(&self) -> impl Iterator<Item = Price> {
        (self.p_min.0..=self.p_max.0).map(Price)
    }
}

impl Default for MarketBounds {
    /// EPEX day-ahead limits: -500 to 3000 EUR/MWh at 0.1 EUR ticks.
    fn default() -> Self {
        MarketBounds {
            p_min: Price(-5000),
            p_max: Price(30000),
            tick: 0.1,
        }
    }
}
