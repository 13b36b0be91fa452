//! Synthetic day-ahead market with a merit-order supply stack.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::curve::{AuctionSnapshot, Side, StepCurve};
use crate::error::{Error, Result};
use crate::forecast::{Exogenous, ExogenousTable};
use crate::units::{MarketBounds, Price, Volume};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarketConfig {
    pub start: NaiveDate,
    pub n_days: usize,
    pub seed: u64,
    pub load_base: f64,
    /// Relative amplitudes of the daily, weekly and annual load cycles.
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub annual_amplitude: f64,
    pub load_ar: f64,
    /// Standard deviation of the load innovation, in MWh.
    pub load_noise: f64,
    pub must_run: f64,
    pub wind_capacity: f64,
    pub wind_ar: f64,
    pub wind_noise: f64,
    pub solar_capacity: f64,
    pub solar_noise: f64,
    /// Weight of the daylight profile against a flat profile, in [0, 1].
    pub solar_daily_amplitude: f64,
    pub solar_annual_amplitude: f64,
    /// Availability of each stack block follows `1 + AR(1)` with these parameters.
    pub availability_ar: f64,
    pub availability_noise: f64,
    /// `(marginal cost EUR/MWh, capacity MWh)`, ascending in cost.
    pub stack: Vec<(f64, f64)>,
    /// Elastic demand bids `(limit price, volume)`.
    pub elastic_tail: Vec<(f64, f64)>,
    /// Shares of renewables and load bid just inside the price limits.
    pub renewable_neighbor_share: f64,
    pub load_neighbor_share: f64,
    /// Probability per hour of a paired spike in the extreme bins.
    pub outlier_rate: f64,
    pub outlier_volume: f64,
    /// Relative noise of the published day-ahead forecasts.
    pub forecast_noise: f64,
}

impl Default for SyntheticMarketConfig {
    fn default() -> Self {
        SyntheticMarketConfig {
            start: NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date"),
            n_days: 560,
            seed: 1,
            load_base: 35_000.0,
            daily_amplitude: 0.15,
            weekly_amplitude: 0.06,
            annual_amplitude: 0.08,
            load_ar: 0.9,
            load_noise: 600.0,
            must_run: 10_000.0,
            wind_capacity: 12_000.0,
            wind_ar: 0.97,
            wind_noise: 0.25,
            solar_capacity: 8_000.0,
            solar_noise: 0.1,
            solar_daily_amplitude: 1.0,
            solar_annual_amplitude: 0.3,
            availability_ar: 0.95,
            availability_noise: 0.01,
            stack: vec![
                (-100.0, 500.0),
                (0.0, 2000.0),
                (10.0, 2500.0),
                (20.0, 5000.0),
                (30.0, 6000.0),
                (40.0, 6000.0),
                (50.0, 5000.0),
                (60.0, 4000.0),
                (80.0, 3000.0),
                (120.0, 2000.0),
                (200.0, 1000.0),
                (500.0, 600.0),
                (1500.0, 300.0),
                (3000.0, 20_000.0),
            ],
            elastic_tail: vec![
                (0.0, 800.0),
                (20.0, 600.0),
                (40.0, 500.0),
                (70.0, 400.0),
                (150.0, 300.0),
                (500.0, 200.0),
            ],
            renewable_neighbor_share: 0.1,
            load_neighbor_share: 0.05,
            outlier_rate: 0.01,
            outlier_volume: 5_000.0,
            forecast_noise: 0.03,
        }
    }
}

impl SyntheticMarketConfig {
    /// No noise, no seasonality and no outliers: every hour is the same.
    pub fn deterministic(n_days: usize) -> SyntheticMarketConfig {
        SyntheticMarketConfig {
            n_days,
            daily_amplitude: 0.0,
            weekly_amplitude: 0.0,
            annual_amplitude: 0.0,
            load_noise: 0.0,
            wind_noise: 0.0,
            solar_noise: 0.0,
            solar_daily_amplitude: 0.0,
            solar_annual_amplitude: 0.0,
            availability_noise: 0.0,
            outlier_rate: 0.0,
            forecast_noise: 0.0,
            ..SyntheticMarketConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ar_ok = |a: f64| (0.0..1.0).contains(&a);
        if self.n_days == 0 {
            return Err(Error::InvalidParameter(
                "synthetic market needs at least one day".into(),
            ));
        }
        if !(ar_ok(self.load_ar) && ar_ok(self.wind_ar) && ar_ok(self.availability_ar)) {
            return Err(Error::InvalidParameter(
                "autoregression coefficients must lie in [0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate)
            || !(0.0..=1.0).contains(&self.solar_daily_amplitude)
            || !(0.0..=1.0).contains(&self.solar_annual_amplitude)
            || !(0.0..=1.0).contains(&self.renewable_neighbor_share)
            || !(0.0..=1.0).contains(&self.load_neighbor_share)
        {
            return Err(Error::InvalidParameter(
                "rates and shares must lie in [0, 1]".into(),
            ));
        }
        let nonneg = [
            self.load_base,
            self.load_noise,
            self.must_run,
            self.wind_capacity,
            self.wind_noise,
            self.solar_capacity,
            self.solar_noise,
            self.availability_noise,
            self.outlier_volume,
            self.forecast_noise,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter(
                "volumes and noise scales must be non-negative".into(),
            ));
        }
        if self.stack.windows(2).any(|w| w[1].0 <= w[0].0)
            || self.stack.iter().any(|b| !(b.1 >= 0.0))
        {
            return Err(Error::InvalidParameter(
                "stack must be strictly ascending in cost with non-negative capacity".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub snapshots: Vec<AuctionSnapshot>,
    /// Covers one day more than the snapshots.
    pub exogenous: ExogenousTable,
}

struct Ar1 {
    phi: f64,
    sd: f64,
    state: f64,
    rng: ChaCha8Rng,
}

impl Ar1 {
    fn new(seed: u64, stream: u64, phi: f64, sd: f64) -> Ar1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        // Start from the stationary distribution.
        let z: f64 = StandardNormal.sample(&mut rng);
        let state = if sd > 0.0 {
            z * sd / (1.0 - phi * phi).sqrt()
        } else {
            0.0
        };
        Ar1 {
            phi,
            sd,
            state,
            rng,
        }
    }

    fn step(&mut self) -> f64 {
        if self.sd > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            self.state = self.phi * self.state + self.sd * z;
        }
        self.state
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const LOAD_STREAM: u64 = 1;
const WIND_STREAM: u64 = 2;
const SOLAR_STREAM: u64 = 3;
const OUTLIER_STREAM: u64 = 4;
const FORECAST_STREAM: u64 = 5;
const AVAILABILITY_STREAM: u64 = 100;

fn daily_load_shape(hour: usize) -> f64 {
    // Night trough, morning and evening peaks.
    let h = hour as f64;
    -(2.0 * PI * (h - 3.0) / 24.0).cos() * 0.7 + (4.0 * PI * (h - 9.0) / 24.0).cos() * 0.3
}

fn solar_shape(hour: usize) -> f64 {
    let h = hour as f64 + 0.5;
    if (6.0..=20.0).contains(&h) {
        (PI * (h - 6.0) / 14.0).sin()
    } else {
        0.0
    }
}

pub fn generate_market(
    cfg: &SyntheticMarketConfig,
    bounds: &MarketBounds,
) -> Result<SyntheticMarket> {
    cfg.validate()?;
    let p_min = bounds.p_min();
    let p_max = bounds.p_max();
    let s_neighbor = bounds.offset(p_min, 5.0);
    let d_neighbor = bounds.offset(p_max, -5.0);
    let stack: Vec<(Price, f64)> = cfg
        .stack
        .iter()
        .map(|&(c, v)| Ok((bounds.price(c)?, v)))
        .collect::<Result<_>>()?;
    let tail: Vec<(Price, Volume)> = cfg
        .elastic_tail
        .iter()
        .map(|&(c, v)| Ok((bounds.price(c)?, Volume::from_mwh(v))))
        .collect::<Result<_>>()?;

    let mut load_ar = Ar1::new(cfg.seed, LOAD_STREAM, cfg.load_ar, cfg.load_noise);
    let mut wind_ar = Ar1::new(cfg.seed, WIND_STREAM, cfg.wind_ar, cfg.wind_noise);
    let mut solar_ar = Ar1::new(cfg.seed, SOLAR_STREAM, 0.8, cfg.solar_noise);
    let mut availability: Vec<Ar1> = (0..stack.len())
        .map(|i| {
            Ar1::new(
                cfg.seed,
                AVAILABILITY_STREAM + i as u64,
                cfg.availability_ar,
                cfg.availability_noise,
            )
        })
        .collect();
    let mut outliers = stream(cfg.seed, OUTLIER_STREAM);
    let mut forecast_rng = stream(cfg.seed, FORECAST_STREAM);

    let mut snapshots = Vec::with_capacity(cfg.n_days * 24);
    let mut exogenous = ExogenousTable::new();
    // Exogenous forecasts run one day past the curves, as they are published day-ahead.
    for d in 0..=cfg.n_days {
        let day = cfg.start + Duration::days(d as i64);
        let weekday = day.weekday().num_days_from_monday();
        let weekly = match weekday {
            5 => -1.0,
            6 => -1.6,
            _ => 0.3,
        };
        let annual = (2.0 * PI * day.ordinal0() as f64 / 365.25).cos();
        for h in 0..24 {
            let season = 1.0
                + cfg.daily_amplitude * daily_load_shape(h)
                + cfg.weekly_amplitude * weekly
                + cfg.annual_amplitude * annual;
            let load = (cfg.load_base * season + load_ar.step()).max(0.0);
            let wind_level = 1.0 / (1.0 + (-(wind_ar.step() - 0.8)).exp());
            let wind = cfg.wind_capacity * wind_level;
            let profile = 0.3 + cfg.solar_daily_amplitude * (solar_shape(h) - 0.3);
            let solar_season = 1.0 - cfg.solar_annual_amplitude * annual;
            let solar =
                (cfg.solar_capacity * profile * solar_season * (1.0 + solar_ar.step())).max(0.0);

            let renewables = wind + solar;
            let mut supply = vec![
                (
                    p_min,
                    Volume::from_mwh(
                        cfg.must_run + renewables * (1.0 - cfg.renewable_neighbor_share),
                    ),
                ),
                (
                    s_neighbor,
                    Volume::from_mwh(renewables * cfg.renewable_neighbor_share),
                ),
            ];
            for ((price, cap), avail) in stack.iter().zip(availability.iter_mut()) {
                let a = (1.0 + avail.step()).max(0.0);
                supply.push((*price, Volume::from_mwh(cap * a)));
            }
            let mut demand = vec![
                (
                    p_max,
                    Volume::from_mwh(load * (1.0 - cfg.load_neighbor_share)),
                ),
                (d_neighbor, Volume::from_mwh(load * cfg.load_neighbor_share)),
            ];
            demand.extend(tail.iter().copied());
            if outliers.random_range(0.0..1.0) < cfg.outlier_rate {
                let spike = Volume::from_mwh(cfg.outlier_volume * outliers.random_range(0.5..1.5));
                supply.push((p_min, spike));
                demand.push((p_max, spike));
            }
            let supply = StepCurve::from_tick_bids(supply, Side::Supply, bounds)?;
            let demand = StepCurve::from_tick_bids(demand, Side::Demand, bounds)?;
            if d < cfg.n_days {
                snapshots.push(AuctionSnapshot::new(day, h as u8, supply, demand)?);
            }

            let mut noisy = |v: f64| {
                let z: f64 = StandardNormal.sample(&mut forecast_rng);
                (v * (1.0 + cfg.forecast_noise * z)).max(0.0)
            };
            exogenous.insert(
                (day, h as u8),
                Exogenous {
                    generation: noisy(load),
                    wind: noisy(wind),
                    solar: noisy(solar),
                },
            );
        }
    }
    Ok(SyntheticMarket {
        snapshots,
        exogenous,
    })
}
