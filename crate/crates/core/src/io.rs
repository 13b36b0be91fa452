//! CSV artifacts: curves, exogenous forecasts, grids, fits and backtest tables.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::backtest::{BacktestResult, HourForecast};
use crate::classes::PriceClassGrid;
use crate::curve::{AuctionSnapshot, Side, StepCurve, TransformedSnapshot};
use crate::error::{Error, Result};
use crate::forecast::{Exogenous, ExogenousTable, FeaturePanel, LassoFit};
use crate::preprocess::SnapshotCleaning;
use crate::units::{MarketBounds, Price, Volume};

pub const CURVE_HEADER: [&str; 5] = ["date", "hour", "side", "price", "volume"];
pub const EXOGENOUS_HEADER: [&str; 5] = [
    "date",
    "hour",
    "generation_forecast",
    "wind_forecast",
    "solar_forecast",
];
pub const GRID_HEADER: [&str; 3] = ["class_index", "price_bound", "mean_cumulative_volume"];
pub const GRID_PRICES_HEADER: [&str; 2] = ["price", "mean_volume"];
pub const FIT_HEADER: [&str; 5] = ["hour", "target", "column", "term", "value"];
pub const FORECAST_HEADER: [&str; 7] = [
    "date",
    "hour",
    "price_forecast",
    "volume_forecast_transformed",
    "volume_forecast_wholesale",
    "capped",
    "clip_count",
];
pub const CLEAN_HEADER: [&str; 6] = ["date", "hour", "observed", "fitted", "sigma", "action"];

/// Raw curves keyed by `(day, hour)`; hour 24 is the repeated autumn hour.
pub type RawCurves = BTreeMap<(NaiveDate, u8), (StepCurve, StepCurve)>;

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn open_reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact {
            path: path_str(path),
            hint: "file does not exist".into(),
        },
        _ => Error::Io(e),
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let found: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    if found != header {
        return Err(Error::Parse {
            path: path_str(path),
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.join(",")
            ),
        });
    }
    Ok(rdr)
}

/// One data row with the context needed for line-numbered errors.
struct Row<'a> {
    path: &'a Path,
    line: u64,
    record: csv::StringRecord,
}

impl Row<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: path_str(self.path),
            line: self.line,
            message: message.into(),
        }
    }

    fn field(&self, idx: usize, name: &str) -> Result<&str> {
        self.record
            .get(idx)
            .map(str::trim)
            .ok_or_else(|| self.err(format!("missing field `{name}`")))
    }

    fn parse<T: FromStr>(&self, idx: usize, name: &str) -> Result<T> {
        let raw = self.field(idx, name)?;
        raw.parse()
            .map_err(|_| self.err(format!("cannot parse `{name}` from `{raw}`")))
    }

    fn finite(&self, idx: usize, name: &str) -> Result<f64> {
        let v: f64 = self.parse(idx, name)?;
        if !v.is_finite() {
            return Err(self.err(format!("`{name}` is not finite")));
        }
        Ok(v)
    }

    fn date(&self, idx: usize) -> Result<NaiveDate> {
        let raw = self.field(idx, "date")?;
        NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map_err(|_| self.err(format!("cannot parse date `{raw}`")))
    }
}

fn rows<'a>(
    path: &'a Path,
    rdr: &'a mut csv::Reader<File>,
) -> impl Iterator<Item = Result<Row<'a>>> + 'a {
    rdr.records().map(move |r| {
        let record = r.map_err(|e| Error::Parse {
            path: path_str(path),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        Ok(Row { path, line, record })
    })
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Reads bid increments into curves. Both sides must be present for every hour.
pub fn read_curves(path: &Path, bounds: &MarketBounds) -> Result<RawCurves> {
    let mut rdr = open_reader(path, &CURVE_HEADER)?;
    type Bids = (Vec<(Price, Volume)>, Vec<(Price, Volume)>, u64);
    let mut grouped: BTreeMap<(NaiveDate, u8), Bids> = BTreeMap::new();
    for row in rows(path, &mut rdr) {
        let row = row?;
        let day = row.date(0)?;
        let hour: u8 = row.parse(1, "hour")?;
        if hour > 24 {
            return Err(row.err(format!("hour {hour} outside 0..=24")));
        }
        let side = row.field(2, "side")?;
        let eur = row.finite(3, "price")?;
        let price = bounds.price(eur).map_err(|e| row.err(e.to_string()))?;
        let mwh = row.finite(4, "volume")?;
        if mwh < 0.0 {
            return Err(row.err(format!("negative volume {mwh}")));
        }
        let entry = grouped
            .entry((day, hour))
            .or_insert((Vec::new(), Vec::new(), row.line));
        match side {
            "S" => entry.0.push((price, Volume::from_mwh(mwh))),
            "D" => entry.1.push((price, Volume::from_mwh(mwh))),
            other => return Err(row.err(format!("side must be S or D, found `{other}`"))),
        }
    }
    let mut out = BTreeMap::new();
    for ((day, hour), (s, d, line)) in grouped {
        let curve_err = |e: Error| Error::Parse {
            path: path_str(path),
            line,
            message: format!("{day} hour {hour}: {e}"),
        };
        if s.is_empty() || d.is_empty() {
            let missing = if s.is_empty() { "supply" } else { "demand" };
            return Err(curve_err(Error::InvalidCurve(format!("no {missing} bids"))));
        }
        let supply = StepCurve::from_tick_bids(s, Side::Supply, bounds).map_err(curve_err)?;
        let demand = StepCurve::from_tick_bids(d, Side::Demand, bounds).map_err(curve_err)?;
        out.insert((day, hour), (supply, demand));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("curve file has no rows"));
    }
    Ok(out)
}

fn write_bids(
    w: &mut csv::Writer<File>,
    day: NaiveDate,
    hour: u8,
    curve: &StepCurve,
    bounds: &MarketBounds,
) -> Result<()> {
    let side = curve.side().code().to_string();
    for (p, v) in curve.bids() {
        w.write_record([
            day.to_string(),
            hour.to_string(),
            side.clone(),
            bounds.eur(p).to_string(),
            v.to_string(),
        ])?;
    }
    Ok(())
}

pub fn write_curves<'a>(
    path: &Path,
    snapshots: impl IntoIterator<Item = &'a AuctionSnapshot>,
    bounds: &MarketBounds,
) -> Result<()> {
    let mut w = writer(path, &CURVE_HEADER)?;
    for s in snapshots {
        write_bids(&mut w, s.day, s.hour, &s.supply, bounds)?;
        write_bids(&mut w, s.day, s.hour, &s.demand, bounds)?;
    }
    w.flush()?;
    Ok(())
}

/// Transformed curves in the curve schema: the inelastic demand is one bid at the cap.
pub fn write_transformed(
    path: &Path,
    snapshots: &[TransformedSnapshot],
    bounds: &MarketBounds,
) -> Result<()> {
    let mut w = writer(path, &CURVE_HEADER)?;
    for s in snapshots {
        write_bids(&mut w, s.day, s.hour, &s.supply, bounds)?;
        w.write_record([
            s.day.to_string(),
            s.hour.to_string(),
            "D".into(),
            bounds.eur(bounds.p_max()).to_string(),
            s.inelastic_demand.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_exogenous(path: &Path) -> Result<ExogenousTable> {
    let mut rdr = open_reader(path, &EXOGENOUS_HEADER)?;
    let mut out = ExogenousTable::new();
    for row in rows(path, &mut rdr) {
        let row = row?;
        let day = row.date(0)?;
        let hour: u8 = row.parse(1, "hour")?;
        if hour > 23 {
            return Err(row.err(format!("hour {hour} outside 0..=23")));
        }
        let value = Exogenous {
            generation: row.finite(2, "generation_forecast")?,
            wind: row.finite(3, "wind_forecast")?,
            solar: row.finite(4, "solar_forecast")?,
        };
        if out.insert((day, hour), value).is_some() {
            return Err(row.err(format!("duplicate row for {day} hour {hour}")));
        }
    }
    Ok(out)
}

pub fn write_exogenous(path: &Path, table: &ExogenousTable) -> Result<()> {
    let mut w = writer(path, &EXOGENOUS_HEADER)?;
    for ((day, hour), e) in table {
        w.write_record([
            day.to_string(),
            hour.to_string(),
            e.generation.to_string(),
            e.wind.to_string(),
            e.solar.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const GRID_FILE: &str = "classes.csv";
pub const GRID_PRICES_FILE: &str = "grid_prices.csv";

/// Writes `classes.csv` and the per-price means needed to rebuild the grid.
pub fn write_grid(dir: &Path, grid: &PriceClassGrid, bounds: &MarketBounds) -> Result<()> {
    let mut w = writer(&dir.join(GRID_FILE), &GRID_HEADER)?;
    for (i, (b, cum)) in grid
        .bounds
        .iter()
        .zip(grid.mean_cumulative_at_bounds())
        .enumerate()
    {
        w.write_record([i.to_string(), bounds.eur(*b).to_string(), cum.to_string()])?;
    }
    w.flush()?;
    let mut w = writer(&dir.join(GRID_PRICES_FILE), &GRID_PRICES_HEADER)?;
    for (p, v) in grid.prices.iter().zip(&grid.mean_volumes) {
        w.write_record([bounds.eur(*p).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid(dir: &Path, volume_step: Volume, bounds: &MarketBounds) -> Result<PriceClassGrid> {
    let classes_path = dir.join(GRID_FILE);
    let prices_path = dir.join(GRID_PRICES_FILE);
    for p in [&classes_path, &prices_path] {
        if !p.exists() {
            return Err(Error::MissingArtifact {
                path: path_str(p),
                hint: "run `curvecast classes` first to derive the price-class grid".into(),
            });
        }
    }
    let mut rdr = open_reader(&classes_path, &GRID_HEADER)?;
    let mut class_bounds = Vec::new();
    for row in rows(&classes_path, &mut rdr) {
        let row = row?;
        let idx: usize = row.parse(0, "class_index")?;
        if idx != class_bounds.len() {
            return Err(row.err(format!("class_index {idx} out of sequence")));
        }
        let p = bounds
            .price(row.finite(1, "price_bound")?)
            .map_err(|e| row.err(e.to_string()))?;
        if class_bounds.last().is_some_and(|last| *last >= p) {
            return Err(row.err("class bounds must increase"));
        }
        class_bounds.push(p);
    }
    let mut rdr = open_reader(&prices_path, &GRID_PRICES_HEADER)?;
    let (mut prices, mut mean_volumes) = (Vec::new(), Vec::new());
    for row in rows(&prices_path, &mut rdr) {
        let row = row?;
        let p = bounds
            .price(row.finite(0, "price")?)
            .map_err(|e| row.err(e.to_string()))?;
        if prices.last().is_some_and(|last| *last >= p) {
            return Err(row.err("prices must increase"));
        }
        prices.push(p);
        mean_volumes.push(row.finite(1, "mean_volume")?);
    }
    if class_bounds.is_empty() {
        return Err(Error::EmptyInput("class grid has no bounds"));
    }
    Ok(PriceClassGrid {
        prices,
        mean_volumes,
        bounds: class_bounds,
        volume_step,
    })
}

/// Sparse coefficients, one row per nonzero term plus the intercept.
pub fn write_fits(path: &Path, fits: &[LassoFit], panel: &FeaturePanel) -> Result<()> {
    let mut w = writer(path, &FIT_HEADER)?;
    for f in fits {
        let target = panel.var_name(f.target);
        w.write_record([
            f.hour.to_string(),
            target.clone(),
            String::new(),
            "intercept".into(),
            f.intercept().to_string(),
        ])?;
        for t in &f.terms {
            w.write_record([
                f.hour.to_string(),
                target.clone(),
                t.column.to_string(),
                t.term.describe(),
                t.coefficient.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn forecast_fields(day: NaiveDate, hour: usize, f: &HourForecast) -> [String; 7] {
    [
        day.to_string(),
        hour.to_string(),
        f.price.to_string(),
        f.volume_transformed.to_string(),
        f.volume_wholesale.to_string(),
        flag(f.capped).into(),
        f.clip_count.to_string(),
    ]
}

pub fn write_forecast(path: &Path, day: NaiveDate, hours: &[HourForecast]) -> Result<()> {
    let mut w = writer(path, &FORECAST_HEADER)?;
    for (h, f) in hours.iter().enumerate() {
        w.write_record(forecast_fields(day, h, f))?;
    }
    w.flush()?;
    Ok(())
}

/// One `price,cumulative_volume` file per hour, named `<day>_hHH.csv`.
pub fn write_curve_dump(
    dir: &Path,
    day: NaiveDate,
    curves: &[StepCurve],
    bounds: &MarketBounds,
) -> Result<()> {
    for (h, c) in curves.iter().enumerate() {
        let mut w = writer(
            &dir.join(format!("{day}_h{h:02}.csv")),
            &["price", "cumulative_volume"],
        )?;
        for (p, v) in c.points() {
            w.write_record([bounds.eur(*p).to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn write_clean_report(path: &Path, cleaning: &SnapshotCleaning) -> Result<()> {
    let mut w = writer(path, &CLEAN_HEADER)?;
    let mut flags: Vec<_> = [("supply", &cleaning.supply), ("demand", &cleaning.demand)]
        .into_iter()
        .flat_map(|(side, r)| r.flagged.iter().map(move |f| (side, f)))
        .collect();
    flags.sort_by_key(|(side, f)| (f.day, f.hour, *side != "supply"));
    for (side, f) in flags {
        w.write_record([
            f.day.to_string(),
            f.hour.to_string(),
            f.observed.to_string(),
            f.fitted.to_string(),
            f.sigma.to_string(),
            format!("{side}-{}", f.action.label()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `forecasts.csv`, `metrics.csv`, `timing.csv` and `dm.csv` into `dir`.
pub fn write_backtest(dir: &Path, result: &BacktestResult) -> Result<()> {
    let mut header = FORECAST_HEADER.to_vec();
    header.extend([
        "realized_price",
        "realized_volume",
        "naive_price",
        "naive_volume",
    ]);
    let mut w = writer(&dir.join("forecasts.csv"), &header)?;
    for r in &result.records {
        let mut fields = forecast_fields(r.date, usize::from(r.hour), &r.forecast).to_vec();
        fields.extend(
            [
                r.realized_price,
                r.realized_volume,
                r.naive_price,
                r.naive_volume,
            ]
            .map(|v| v.to_string()),
        );
        w.write_record(&fields)?;
    }
    w.flush()?;

    let mut w = writer(
        &dir.join("metrics.csv"),
        &["model", "target", "mae", "rmse"],
    )?;
    for m in result.metrics()? {
        w.write_record([
            m.model,
            m.target.into(),
            m.mae.to_string(),
            m.rmse.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join("timing.csv"), &["date", "seconds"])?;
    for (day, secs) in &result.timing {
        w.write_record([day.to_string(), secs.to_string()])?;
    }
    w.write_record(["mean".into(), result.mean_seconds().to_string()])?;
    w.write_record(["median".into(), result.median_seconds().to_string()])?;
    w.flush()?;

    let mut w = writer(
        &dir.join("dm.csv"),
        &["target", "statistic", "p_value", "n", "lag", "degenerate"],
    )?;
    for row in result.dm()? {
        let d = row.result;
        w.write_record([
            row.target.into(),
            d.statistic.to_string(),
            d.p_value.to_string(),
            d.n.to_string(),
            d.lag.to_string(),
            flag(d.degenerate).into(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
