//! Flat `key = value` run configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::backtest::{BacktestConfig, SyntheticMarketConfig};
use crate::error::{Error, Result};
use crate::forecast::{DesignSpec, DummyMode, ForecasterConfig, LagSpec, LassoConfig, SourceSet};
use crate::preprocess::DstCalendar;
use crate::units::{MarketBounds, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DstRule {
    None,
    European,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub p_min: f64,
    pub p_max: f64,
    pub tick: f64,
    /// V* in MWh.
    pub volume_step: f64,
    pub window_days: usize,
    pub bootstrap_samples: usize,
    pub seed: u64,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub early_stop: bool,
    /// 0 disables the patience stop.
    pub bic_patience: usize,
    /// 0 means unlimited.
    pub max_support: usize,
    pub dummy_mode: DummyMode,
    pub sources: SourceSet,
    /// 0 disables cleaning.
    pub k_sigma: f64,
    pub dst: DstRule,
    pub curves: PathBuf,
    pub exogenous: PathBuf,
    pub classes_dir: PathBuf,
    pub out: PathBuf,
    pub synth_days: usize,
    pub synth_start: NaiveDate,
    /// First out-of-sample day, or the forecast day. Defaults from the data.
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SyntheticMarketConfig::default();
        let lasso = LassoConfig::default();
        RunConfig {
            p_min: -500.0,
            p_max: 3000.0,
            tick: 0.1,
            volume_step: 500.0,
            window_days: 365,
            bootstrap_samples: 10_000,
            seed: 1,
            n_lambda: lasso.n_lambda,
            lambda_min_ratio: lasso.lambda_min_ratio,
            tol: lasso.tol,
            max_iter: lasso.max_iter,
            early_stop: lasso.early_stop,
            bic_patience: lasso.bic_patience.unwrap_or(0),
            max_support: lasso.max_support.unwrap_or(0),
            dummy_mode: DummyMode::AsPrinted,
            sources: SourceSet::FullPanel,
            k_sigma: 3.0,
            dst: DstRule::None,
            curves: PathBuf::from("data/curves.csv"),
            exogenous: PathBuf::from("data/exogenous.csv"),
            classes_dir: PathBuf::from("artifacts"),
            out: PathBuf::from("results"),
            synth_days: synth.n_days,
            synth_start: synth.start,
            start: None,
            end: None,
        }
    }
}

pub const KEYS: [&str; 28] = [
    "p_min",
    "p_max",
    "tick",
    "volume_step",
    "window_days",
    "B",
    "seed",
    "n_lambda",
    "lambda_min_ratio",
    "tol",
    "max_iter",
    "early_stop",
    "bic_patience",
    "max_support",
    "dummy_mode",
    "sources",
    "k_sigma",
    "dst",
    "curves",
    "exogenous",
    "classes_dir",
    "out",
    "synth_days",
    "synth_start",
    "start",
    "end",
    "lags",
    "version",
];

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::InvalidParameter(format!("{key} = {value}: expected {expected}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, expected))
}

fn date(key: &str, value: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(value, "%Y-%m-%d").map_err(|_| bad(key, value, "a YYYY-MM-DD date"))
}

fn opt_date(key: &str, value: &str) -> Result<Option<NaiveDate>> {
    if value == "auto" {
        Ok(None)
    } else {
        date(key, value).map(Some)
    }
}

impl RunConfig {
    /// Parses a config file; later files or flags override through [`RunConfig::set`].
    pub fn from_text(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("line {}: expected `key = value`", i + 1))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_owned()) {
                return Err(Error::InvalidParameter(format!(
                    "line {}: duplicate key `{key}`",
                    i + 1
                )));
            }
            cfg.set(key, value.trim())
                .map_err(|e| Error::InvalidParameter(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidParameter(format!("cannot read config {}: {e}", path.display()))
        })?;
        RunConfig::from_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "p_min" => self.p_min = num(key, value, "a number")?,
            "p_max" => self.p_max = num(key, value, "a number")?,
            "tick" => self.tick = num(key, value, "a number")?,
            "volume_step" => self.volume_step = num(key, value, "a volume in MWh")?,
            "window_days" => self.window_days = num(key, value, "a day count")?,
            "B" => self.bootstrap_samples = num(key, value, "a sample count")?,
            "seed" => self.seed = num(key, value, "an unsigned integer")?,
            "n_lambda" => self.n_lambda = num(key, value, "a count")?,
            "lambda_min_ratio" => self.lambda_min_ratio = num(key, value, "a ratio")?,
            "tol" => self.tol = num(key, value, "a tolerance")?,
            "max_iter" => self.max_iter = num(key, value, "a count")?,
            "early_stop" => self.early_stop = num(key, value, "true or false")?,
            "bic_patience" => self.bic_patience = num(key, value, "a count")?,
            "max_support" => self.max_support = num(key, value, "a count")?,
            "dummy_mode" => {
                self.dummy_mode = match value {
                    "as-printed" => DummyMode::AsPrinted,
                    "one-hot" => DummyMode::OneHot,
                    _ => return Err(bad(key, value, "as-printed or one-hot")),
                }
            }
            "sources" => {
                self.sources = match value {
                    "full-panel" => SourceSet::FullPanel,
                    "targets" => SourceSet::Targets,
                    _ => return Err(bad(key, value, "full-panel or targets")),
                }
            }
            "k_sigma" => self.k_sigma = num(key, value, "a number, 0 to disable")?,
            "dst" => {
                self.dst = match value {
                    "none" => DstRule::None,
                    "european" => DstRule::European,
                    _ => return Err(bad(key, value, "none or european")),
                }
            }
            "curves" => self.curves = PathBuf::from(value),
            "exogenous" => self.exogenous = PathBuf::from(value),
            "classes_dir" => self.classes_dir = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "synth_days" => self.synth_days = num(key, value, "a day count")?,
            "synth_start" => self.synth_start = date(key, value)?,
            "start" => self.start = opt_date(key, value)?,
            "end" => self.end = opt_date(key, value)?,
            // Informational keys written by `to_text`.
            "lags" if value == lag_text() => {}
            "lags" => return Err(bad(key, value, &lag_text())),
            "version" => {}
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown config key `{key}` (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds()?;
        if !(self.volume_step > 0.0) || Volume::from_mwh(self.volume_step) == Volume::ZERO {
            return Err(Error::InvalidParameter(format!(
                "volume_step must be at least 0.1 MWh, got {}",
                self.volume_step
            )));
        }
        if self.window_days < 2 {
            return Err(Error::InvalidParameter(
                "window_days must be at least 2".into(),
            ));
        }
        if self.bootstrap_samples == 0 {
            return Err(Error::InvalidParameter("B must be positive".into()));
        }
        if !(self.k_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "k_sigma must be >= 0, got {}",
                self.k_sigma
            )));
        }
        if self.synth_days == 0 {
            return Err(Error::InvalidParameter(
                "synth_days must be positive".into(),
            ));
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if e < s {
                return Err(Error::InvalidParameter(format!(
                    "end {e} precedes start {s}"
                )));
            }
        }
        self.lasso().validate()
    }

    pub fn bounds(&self) -> Result<MarketBounds> {
        MarketBounds::new(self.p_min, self.p_max, self.tick)
    }

    pub fn lasso(&self) -> LassoConfig {
        LassoConfig {
            n_lambda: self.n_lambda,
            lambda_min_ratio: self.lambda_min_ratio,
            tol: self.tol,
            max_iter: self.max_iter,
            early_stop: self.early_stop,
            max_support: (self.max_support > 0).then_some(self.max_support),
            bic_patience: (self.bic_patience > 0).then_some(self.bic_patience),
        }
    }

    pub fn backtest(&self) -> Result<BacktestConfig> {
        Ok(BacktestConfig {
            bounds: self.bounds()?,
            window_days: self.window_days,
            volume_step: Volume::from_mwh(self.volume_step),
            clean_k_sigma: (self.k_sigma > 0.0).then_some(self.k_sigma),
            forecaster: ForecasterConfig {
                design: DesignSpec {
                    lags: LagSpec::default(),
                    sources: self.sources,
                    dummies: self.dummy_mode,
                },
                lasso: self.lasso(),
                bootstrap_samples: self.bootstrap_samples,
                seed: self.seed,
            },
        })
    }

    pub fn synth(&self) -> SyntheticMarketConfig {
        SyntheticMarketConfig {
            start: self.synth_start,
            n_days: self.synth_days,
            seed: self.seed,
            ..SyntheticMarketConfig::default()
        }
    }

    /// Clock-change calendar covering the given years.
    pub fn calendar(&self, first_year: i32, last_year: i32) -> DstCalendar {
        match self.dst {
            DstRule::None => DstCalendar::none(),
            DstRule::European => DstCalendar::european(first_year, last_year),
        }
    }

    /// Every key with its effective value; parses back to the same config.
    pub fn to_text(&self) -> String {
        let opt = |d: Option<NaiveDate>| d.map_or("auto".to_owned(), |d| d.to_string());
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("version", env!("CARGO_PKG_VERSION").into());
        kv("p_min", self.p_min.to_string());
        kv("p_max", self.p_max.to_string());
        kv("tick", self.tick.to_string());
        kv("volume_step", self.volume_step.to_string());
        kv("window_days", self.window_days.to_string());
        kv("B", self.bootstrap_samples.to_string());
        kv("seed", self.seed.to_string());
        kv("n_lambda", self.n_lambda.to_string());
        kv("lambda_min_ratio", self.lambda_min_ratio.to_string());
        kv("tol", self.tol.to_string());
        kv("max_iter", self.max_iter.to_string());
        kv("early_stop", self.early_stop.to_string());
        kv("bic_patience", self.bic_patience.to_string());
        kv("max_support", self.max_support.to_string());
        kv("dummy_mode", self.dummy_mode.name().into());
        kv("sources", self.sources.name().into());
        kv("lags", lag_text());
        kv("k_sigma", self.k_sigma.to_string());
        kv(
            "dst",
            match self.dst {
                DstRule::None => "none",
                DstRule::European => "european",
            }
            .into(),
        );
        kv("curves", self.curves.display().to_string());
        kv("exogenous", self.exogenous.display().to_string());
        kv("classes_dir", self.classes_dir.display().to_string());
        kv("out", self.out.display().to_string());
        kv("synth_days", self.synth_days.to_string());
        kv("synth_start", self.synth_start.to_string());
        kv("start", opt(self.start));
        kv("end", opt(self.end));
        s
    }
}

fn lag_text() -> String {
    let l = LagSpec::default();
    format!("{}/{}/{}", l.own, l.shared, l.other)
}
