use std::collections::BTreeMap;
use std::time::Instant;

use chrono::{Duration, NaiveDate};

use super::dm::{dm_test, DmResult};
use super::metrics::{mae, rmse};
use super::naive::naive_forecast;
use crate::classes::{class_volumes, ClassVolumeVector, PriceClassGrid};
use crate::curve::{transform, AuctionSnapshot, StepCurve, TransformedSnapshot};
use crate::error::{Error, Result};
use crate::forecast::{
    bootstrap_forecast, fit_all, ExogenousTable, FeaturePanel, ForecasterConfig, LassoFit,
    WholesaleOutcome, HOURS,
};
use crate::preprocess::clean_snapshots;
use crate::reconstruct::{
    compute_r, forecast_equilibrium, reconstruct_supply, ReconstructionWeights,
};
use crate::units::{MarketBounds, Volume};

/// Hourly auction curves plus published day-ahead fundamentals.
#[derive(Debug, Clone)]
pub struct MarketData {
    snapshots: Vec<AuctionSnapshot>,
    index: BTreeMap<(NaiveDate, u8), usize>,
    pub exogenous: ExogenousTable,
}

impl MarketData {
    pub fn new(
        mut snapshots: Vec<AuctionSnapshot>,
        exogenous: ExogenousTable,
    ) -> Result<MarketData> {
        snapshots.sort_by_key(|s| (s.day, s.hour));
        let mut index = BTreeMap::new();
        for (i, s) in snapshots.iter().enumerate() {
            if s.hour as usize >= HOURS {
                return Err(Error::InvalidParameter(format!(
                    "hour {} on {} is outside 0..24; adjust clock changes first",
                    s.hour, s.day
                )));
            }
            if index.insert((s.day, s.hour), i).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate snapshot {} hour {}",
                    s.day, s.hour
                )));
            }
        }
        Ok(MarketData {
            snapshots,
            index,
            exogenous,
        })
    }

    pub fn snapshots(&self) -> &[AuctionSnapshot] {
        &self.snapshots
    }

    pub fn get(&self, day: NaiveDate, hour: u8) -> Option<&AuctionSnapshot> {
        self.index.get(&(day, hour)).map(|&i| &self.snapshots[i])
    }

    pub fn first_day(&self) -> Option<NaiveDate> {
        self.snapshots.first().map(|s| s.day)
    }

    pub fn last_day(&self) -> Option<NaiveDate> {
        self.snapshots.last().map(|s| s.day)
    }

    /// All 24 snapshots of every day in `days`.
    pub fn window(&self, days: &[NaiveDate]) -> Result<Vec<AuctionSnapshot>> {
        let mut out = Vec::with_capacity(days.len() * HOURS);
        let mut missing = Vec::new();
        for &d in days {
            for h in 0..HOURS as u8 {
                match self.get(d, h) {
                    Some(s) => out.push(s.clone()),
                    None => missing.push((d, h)),
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingHours(missing));
        }
        Ok(out)
    }

    /// Realized equilibrium price (EUR/MWh) and volume (MWh) of every hour of `day`.
    pub fn realized(&self, day: NaiveDate, bounds: &MarketBounds) -> Result<Vec<WholesaleOutcome>> {
        (0..HOURS as u8)
            .map(|h| {
                let s = self
                    .get(day, h)
                    .ok_or_else(|| Error::MissingHours(vec![(day, h)]))?;
                let eq = s.equilibrium(bounds)?;
                Ok(WholesaleOutcome {
                    price: bounds.eur(eq.price),
                    volume: eq.volume.mwh(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestConfig {
    pub bounds: MarketBounds,
    pub window_days: usize,
    pub volume_step: Volume,
    /// Outlier threshold for cleaning the extreme bins; `None` disables cleaning.
    pub clean_k_sigma: Option<f64>,
    pub forecaster: ForecasterConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            bounds: MarketBounds::default(),
            window_days: 365,
            volume_step: Volume::from_mwh(500.0),
            clean_k_sigma: Some(3.0),
            forecaster: ForecasterConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourForecast {
    pub price: f64,
    pub volume_transformed: f64,
    pub volume_wholesale: f64,
    pub capped: bool,
    pub clip_count: usize,
}

/// Inputs visible to a model when forecasting `target`.
pub struct DayContext<'a> {
    pub target: NaiveDate,
    /// Trailing estimation window, oldest first; ends the day before `target`.
    pub window: &'a [NaiveDate],
    pub data: &'a MarketData,
    pub config: &'a BacktestConfig,
}

pub trait DayAheadModel: Sync {
    fn name(&self) -> &str;
    /// One forecast per delivery hour of `ctx.target`.
    fn forecast_day(&self, ctx: &DayContext<'_>) -> Result<Vec<HourForecast>>;
}

/// Everything the forecaster derives from one estimation window.
pub struct WindowModel {
    pub grid: PriceClassGrid,
    pub transformed: Vec<TransformedSnapshot>,
    pub class_vectors: Vec<ClassVolumeVector>,
    pub panel: FeaturePanel,
}

impl WindowModel {
    /// Derives the class grid from the window unless one is given.
    pub fn build(
        data: &MarketData,
        window: &[NaiveDate],
        config: &BacktestConfig,
        grid: Option<&PriceClassGrid>,
    ) -> Result<WindowModel> {
        let raw = data.window(window)?;
        let snapshots = match config.clean_k_sigma {
            Some(k) => clean_snapshots(&raw, &config.bounds, k)?.0,
            None => raw,
        };
        let transformed: Vec<TransformedSnapshot> = snapshots
            .iter()
            .map(|s| transform(s, &config.bounds))
            .collect::<Result<_>>()?;
        let grid = match grid {
            Some(g) => g.clone(),
            None => {
                PriceClassGrid::from_snapshots(&transformed, config.volume_step, &config.bounds)?
            }
        };
        let class_vectors: Vec<ClassVolumeVector> = transformed
            .iter()
            .map(|t| class_volumes(t, &grid))
            .collect::<Result<_>>()?;
        let mut wholesale = BTreeMap::new();
        for s in &snapshots {
            let eq = s.equilibrium(&config.bounds)?;
            wholesale.insert(
                (s.day, s.hour),
                WholesaleOutcome {
                    price: config.bounds.eur(eq.price),
                    volume: eq.volume.mwh(),
                },
            );
        }
        let panel = FeaturePanel::assemble(&class_vectors, &wholesale, &data.exogenous, window)?;
        Ok(WindowModel {
            grid,
            transformed,
            class_vectors,
            panel,
        })
    }
}

/// Forecast for the day after a window, with the curves behind it.
#[derive(Debug, Clone)]
pub struct NextDayForecast {
    pub day: NaiveDate,
    pub hours: Vec<HourForecast>,
    pub supply_curves: Vec<StepCurve>,
    pub fits: Vec<LassoFit>,
}

/// Fit, bootstrap, reconstruct and intersect.
pub fn forecast_next_day(wm: &WindowModel, config: &BacktestConfig) -> Result<NextDayForecast> {
    let bounds = &config.bounds;
    let fits = fit_all(&wm.panel, &config.forecaster)?;
    let forecast = bootstrap_forecast(&fits, &wm.panel, &config.forecaster)?;
    let weights = ReconstructionWeights::new(&wm.grid, &compute_r(&wm.transformed))?;
    let n_supply = wm.grid.n_classes();
    let diff_var = wm
        .panel
        .volume_diff_var()
        .expect("assembled panels carry auxiliaries");
    let last = wm.panel.n_days() - 1;
    let mut hours = Vec::with_capacity(HOURS);
    let mut supply_curves = Vec::with_capacity(HOURS);
    for h in 0..HOURS {
        let x = forecast.hour(h);
        let rec = reconstruct_supply(&x[..n_supply], &weights, bounds)?;
        let demand = x[n_supply];
        let eq = forecast_equilibrium(&rec.supply, demand, bounds)?;
        hours.push(HourForecast {
            price: bounds.eur(eq.price),
            volume_transformed: eq.volume.mwh(),
            // Persistence for the volume difference, which is not a target.
            volume_wholesale: demand.max(0.0) - wm.panel.value(diff_var, h, last),
            capped: eq.capped,
            clip_count: rec.clip_count + usize::from(eq.demand_clipped),
        });
        supply_curves.push(rec.supply);
    }
    Ok(NextDayForecast {
        day: forecast.day,
        hours,
        supply_curves,
        fits,
    })
}

/// Transform, classify, fit, bootstrap, reconstruct and intersect.
#[derive(Debug, Clone, Copy, Default)]
pub struct XModel;

impl DayAheadModel for XModel {
    fn name(&self) -> &str {
        "xmodel"
    }

    fn forecast_day(&self, ctx: &DayContext<'_>) -> Result<Vec<HourForecast>> {
        let wm = WindowModel::build(ctx.data, ctx.window, ctx.config, None)?;
        let out = forecast_next_day(&wm, ctx.config)?;
        debug_assert_eq!(out.day, ctx.target);
        Ok(out.hours)
    }
}

/// Reads the realized outcome; only useful to check the harness.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectForesight;

impl DayAheadModel for PerfectForesight {
    fn name(&self) -> &str {
        "perfect"
    }

    fn forecast_day(&self, ctx: &DayContext<'_>) -> Result<Vec<HourForecast>> {
        Ok(ctx
            .data
            .realized(ctx.target, &ctx.config.bounds)?
            .into_iter()
            .map(|o| HourForecast {
                price: o.price,
                volume_transformed: o.volume,
                volume_wholesale: o.volume,
                capped: false,
                clip_count: 0,
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastRecord {
    pub date: NaiveDate,
    pub hour: u8,
    pub forecast: HourForecast,
    pub realized_price: f64,
    pub realized_volume: f64,
    pub naive_price: f64,
    pub naive_volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub model: String,
    pub records: Vec<ForecastRecord>,
    /// Wall-clock seconds per out-of-sample day.
    pub timing: Vec<(NaiveDate, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: String,
    pub target: &'static str,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmRow {
    pub target: &'static str,
    pub result: DmResult,
}

impl BacktestResult {
    pub fn price_errors(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.forecast.price - r.realized_price)
            .collect()
    }

    pub fn naive_price_errors(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.naive_price - r.realized_price)
            .collect()
    }

    pub fn volume_errors(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.forecast.volume_wholesale - r.realized_volume)
            .collect()
    }

    pub fn naive_volume_errors(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.naive_volume - r.realized_volume)
            .collect()
    }

    pub fn metrics(&self) -> Result<Vec<MetricRow>> {
        let row = |model: &str, target, e: Vec<f64>| -> Result<MetricRow> {
            Ok(MetricRow {
                model: model.to_string(),
                target,
                mae: mae(&e)?,
                rmse: rmse(&e)?,
            })
        };
        Ok(vec![
            row(&self.model, "price", self.price_errors())?,
            row(&self.model, "volume", self.volume_errors())?,
            row("naive", "price", self.naive_price_errors())?,
            row("naive", "volume", self.naive_volume_errors())?,
        ])
    }

    /// Model against the naive benchmark; negative statistics favour the model.
    pub fn dm(&self) -> Result<Vec<DmRow>> {
        Ok(vec![
            DmRow {
                target: "price",
                result: dm_test(&self.price_errors(), &self.naive_price_errors())?,
            },
            DmRow {
                target: "volume",
                result: dm_test(&self.volume_errors(), &self.naive_volume_errors())?,
            },
        ])
    }

    pub fn mean_seconds(&self) -> f64 {
        self.timing.iter().map(|t| t.1).sum::<f64>() / self.timing.len().max(1) as f64
    }

    pub fn median_seconds(&self) -> f64 {
        let mut s: Vec<f64> = self.timing.iter().map(|t| t.1).collect();
        if s.is_empty() {
            return 0.0;
        }
        s.sort_by(f64::total_cmp);
        let m = s.len() / 2;
        if s.len() % 2 == 1 {
            s[m]
        } else {
            (s[m - 1] + s[m]) / 2.0
        }
    }
}

/// The `days` calendar days immediately before `target`, oldest first.
pub fn window_before(target: NaiveDate, days: usize) -> Vec<NaiveDate> {
    (1..=days as i64)
        .rev()
        .map(|k| target - Duration::days(k))
        .collect()
}

/// Out-of-sample days `first ..= last`, one model fit per day.
pub fn rolling_backtest(
    data: &MarketData,
    config: &BacktestConfig,
    model: &dyn DayAheadModel,
    first: NaiveDate,
    last: NaiveDate,
    mut on_day: impl FnMut(NaiveDate, f64),
) -> Result<BacktestResult> {
    if last < first {
        return Err(Error::InvalidParameter(format!(
            "backtest end {last} precedes start {first}"
        )));
    }
    if config.window_days < 7 {
        return Err(Error::InvalidParameter(
            "window_days must be at least 7".into(),
        ));
    }
    let data_start = data.first_day().ok_or(Error::EmptyInput("no snapshots"))?;
    let window_start = first - Duration::days(config.window_days as i64);
    if window_start < data_start {
        return Err(Error::InsufficientHistory(format!(
            "a {}-day window before {first} needs data from {window_start}, data starts {data_start}",
            config.window_days
        )));
    }
    if data.last_day().is_some_and(|d| d < last) {
        return Err(Error::InsufficientHistory(format!(
            "data ends before the backtest end {last}"
        )));
    }
    let mut history: BTreeMap<NaiveDate, ([f64; 24], [f64; 24])> = BTreeMap::new();
    let realized_day =
        |day: NaiveDate, history: &mut BTreeMap<_, _>| -> Result<([f64; 24], [f64; 24])> {
            if let Some(v) = history.get(&day) {
                return Ok(*v);
            }
            let r = data.realized(day, &config.bounds)?;
            let mut p = [0.0; 24];
            let mut v = [0.0; 24];
            for (h, o) in r.iter().enumerate() {
                p[h] = o.price;
                v[h] = o.volume;
            }
            history.insert(day, (p, v));
            Ok((p, v))
        };

    let mut records = Vec::new();
    let mut timing = Vec::new();
    let mut target = first;
    while target <= last {
        let window = window_before(target, config.window_days);
        for &d in &window[window.len() - 7..] {
            realized_day(d, &mut history)?;
        }
        let prices: BTreeMap<NaiveDate, [f64; 24]> =
            history.iter().map(|(d, v)| (*d, v.0)).collect();
        let volumes: BTreeMap<NaiveDate, [f64; 24]> =
            history.iter().map(|(d, v)| (*d, v.1)).collect();
        let naive_p = naive_forecast(&prices, target)?;
        let naive_v = naive_forecast(&volumes, target)?;

        let clock = Instant::now();
        let ctx = DayContext {
            target,
            window: &window,
            data,
            config,
        };
        let hours = model.forecast_day(&ctx)?;
        let seconds = clock.elapsed().as_secs_f64();
        if hours.len() != HOURS {
            return Err(Error::InvalidParameter(format!(
                "model {} returned {} hours for {target}",
                model.name(),
                hours.len()
            )));
        }
        let (real_p, real_v) = realized_day(target, &mut history)?;
        for (h, f) in hours.into_iter().enumerate() {
            records.push(ForecastRecord {
                date: target,
                hour: h as u8,
                forecast: f,
                realized_price: real_p[h],
                realized_volume: real_v[h],
                naive_price: naive_p[h],
                naive_volume: naive_v[h],
            });
        }
        timing.push((target, seconds));
        on_day(target, seconds);
        // Keep the naive history bounded.
        let cutoff = target - Duration::days(8);
        history.retain(|d, _| *d >= cutoff);
        target += Duration::days(1);
    }
    Ok(BacktestResult {
        model: model.name().to_string(),
        records,
        timing,
    })
}
