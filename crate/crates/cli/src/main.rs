use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::{Datelike, Duration, NaiveDate};
use clap::{Args, Parser, Subcommand};

use curvecast::backtest::{
    forecast_next_day, generate_market, rolling_backtest, window_before, MarketData, WindowModel,
    XModel,
};
use curvecast::classes::PriceClassGrid;
use curvecast::config::RunConfig;
use curvecast::preprocess::{adjust_snapshots, clean_snapshots};
use curvecast::{io, transform, AuctionSnapshot, Error, TransformedSnapshot};

#[derive(Parser)]
#[command(
    name = "curvecast",
    version,
    about = "Day-ahead auction curve forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    curves: Option<String>,
    #[arg(long)]
    exogenous: Option<String>,
    #[arg(long)]
    classes_dir: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    window_days: Option<String>,
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    end: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic market: curves and exogenous forecasts.
    Synth(Common),
    /// Clean the extreme bins and write cleaned curves plus a report.
    Clean {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k_sigma: Option<String>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Dump transformed curves (inelastic demand).
    Transform(Common),
    /// Derive the price-class grid from the window before `start`.
    Classes(Common),
    /// Estimate the class models and dump their coefficients.
    Fit(Common),
    /// Forecast the day `start` (default: the day after the data).
    Forecast(Common),
    /// Rolling out-of-sample backtest against the naive benchmark.
    Backtest(Common),
}

fn load_config(common: &Common, extra: &[(&str, Option<&String>)]) -> curvecast::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            Error::InvalidParameter(format!("--set expects KEY=VALUE, got `{kv}`"))
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    let flags = [
        ("curves", common.curves.as_ref()),
        ("exogenous", common.exogenous.as_ref()),
        ("classes_dir", common.classes_dir.as_ref()),
        ("out", common.out.as_ref()),
        ("seed", common.seed.as_ref()),
        ("window_days", common.window_days.as_ref()),
        ("start", common.start.as_ref()),
        ("end", common.end.as_ref()),
    ];
    for (k, v) in flags.iter().chain(extra) {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_metadata(dir: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = format!(
        "# curvecast {} {command}\n# bootstrap rng: ChaCha8, stream per (day, hour), seed {}\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.seed,
        cfg.to_text()
    );
    let path = dir.join(format!("{command}_metadata.txt"));
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn parent(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn require(path: &Path, hint: &str) -> curvecast::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.display().to_string(),
            hint: hint.into(),
        })
    }
}

fn load_snapshots(cfg: &RunConfig) -> curvecast::Result<Vec<AuctionSnapshot>> {
    require(&cfg.curves, "pass --curves or run `curvecast synth` first")?;
    let raw = io::read_curves(&cfg.curves, &cfg.bounds()?)?;
    let first = raw.keys().next().map_or(0, |k| k.0.year());
    let last = raw.keys().next_back().map_or(0, |k| k.0.year());
    adjust_snapshots(raw, &cfg.calendar(first, last))
}

fn load_market(cfg: &RunConfig) -> curvecast::Result<MarketData> {
    let snapshots = load_snapshots(cfg)?;
    require(
        &cfg.exogenous,
        "pass --exogenous or run `curvecast synth` first",
    )?;
    let exogenous = io::read_exogenous(&cfg.exogenous)?;
    MarketData::new(snapshots, exogenous)
}

/// Target day and the window before it.
fn target_window(cfg: &RunConfig, data_last: NaiveDate) -> (NaiveDate, Vec<NaiveDate>) {
    let target = cfg.start.unwrap_or(data_last + Duration::days(1));
    (target, window_before(target, cfg.window_days))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(common) => {
            let cfg = load_config(&common, &[])?;
            let bounds = cfg.bounds()?;
            let market = generate_market(&cfg.synth(), &bounds)?;
            io::write_curves(&cfg.curves, &market.snapshots, &bounds)?;
            io::write_exogenous(&cfg.exogenous, &market.exogenous)?;
            write_metadata(&parent(&cfg.curves), "synth", &cfg)?;
            eprintln!(
                "wrote {} snapshots to {}",
                market.snapshots.len(),
                cfg.curves.display()
            );
        }
        Command::Clean {
            common,
            k_sigma,
            report,
        } => {
            let cfg = load_config(&common, &[("k_sigma", k_sigma.as_ref())])?;
            if cfg.k_sigma <= 0.0 {
                return Err(Error::InvalidParameter("clean needs k_sigma > 0".into()).into());
            }
            let bounds = cfg.bounds()?;
            let snapshots = load_snapshots(&cfg)?;
            let (cleaned, cleaning) = clean_snapshots(&snapshots, &bounds, cfg.k_sigma)?;
            let report = report.unwrap_or_else(|| cfg.out.join("clean_report.csv"));
            io::write_curves(&cfg.out.join("curves_clean.csv"), &cleaned, &bounds)?;
            io::write_clean_report(&report, &cleaning)?;
            write_metadata(&cfg.out, "clean", &cfg)?;
            eprintln!(
                "flagged {} supply and {} demand bins",
                cleaning.supply.flagged.len(),
                cleaning.demand.flagged.len()
            );
        }
        Command::Transform(common) => {
            let cfg = load_config(&common, &[])?;
            let bounds = cfg.bounds()?;
            let transformed: Vec<TransformedSnapshot> = load_snapshots(&cfg)?
                .iter()
                .map(|s| transform(s, &bounds))
                .collect::<curvecast::Result<_>>()?;
            io::write_transformed(&cfg.out.join("transformed.csv"), &transformed, &bounds)?;
            write_metadata(&cfg.out, "transform", &cfg)?;
        }
        Command::Classes(common) => {
            let mut cfg = load_config(&common, &[])?;
            let bt = cfg.backtest()?;
            let data = MarketData::new(load_snapshots(&cfg)?, Default::default())?;
            let last = data.last_day().ok_or(Error::EmptyInput("no snapshots"))?;
            let (target, window) = target_window(&cfg, last);
            cfg.start = Some(target);
            let raw = data.window(&window)?;
            let snapshots = match bt.clean_k_sigma {
                Some(k) => clean_snapshots(&raw, &bt.bounds, k)?.0,
                None => raw,
            };
            let transformed: Vec<TransformedSnapshot> = snapshots
                .iter()
                .map(|s| transform(s, &bt.bounds))
                .collect::<curvecast::Result<_>>()?;
            let grid = PriceClassGrid::from_snapshots(&transformed, bt.volume_step, &bt.bounds)?;
            io::write_grid(&cfg.classes_dir, &grid, &bt.bounds)?;
            write_metadata(&cfg.classes_dir, "classes", &cfg)?;
            eprintln!(
                "{} supply classes over {} days from {}",
                grid.n_classes(),
                window.len(),
                window[0]
            );
        }
        Command::Fit(common) => {
            let mut cfg = load_config(&common, &[])?;
            let bt = cfg.backtest()?;
            let grid = io::read_grid(&cfg.classes_dir, bt.volume_step, &bt.bounds)?;
            let data = load_market(&cfg)?;
            let last = data.last_day().ok_or(Error::EmptyInput("no snapshots"))?;
            let (target, window) = target_window(&cfg, last);
            cfg.start = Some(target);
            let wm = WindowModel::build(&data, &window, &bt, Some(&grid))?;
            let fits = curvecast::forecast::fit_all(&wm.panel, &bt.forecaster)?;
            io::write_fits(&cfg.out.join("fits.csv"), &fits, &wm.panel)?;
            write_metadata(&cfg.out, "fit", &cfg)?;
        }
        Command::Forecast(common) => {
            let mut cfg = load_config(&common, &[])?;
            let bt = cfg.backtest()?;
            let grid = io::read_grid(&cfg.classes_dir, bt.volume_step, &bt.bounds)?;
            let data = load_market(&cfg)?;
            let last = data.last_day().ok_or(Error::EmptyInput("no snapshots"))?;
            let (target, window) = target_window(&cfg, last);
            cfg.start = Some(target);
            let wm = WindowModel::build(&data, &window, &bt, Some(&grid))?;
            let out = forecast_next_day(&wm, &bt)?;
            debug_assert_eq!(out.day, target);
            io::write_forecast(&cfg.out.join("forecast.csv"), target, &out.hours)?;
            io::write_curve_dump(
                &cfg.out.join("curves"),
                target,
                &out.supply_curves,
                &bt.bounds,
            )?;
            write_metadata(&cfg.out, "forecast", &cfg)?;
        }
        Command::Backtest(common) => {
            let mut cfg = load_config(&common, &[])?;
            let bt = cfg.backtest()?;
            let data = load_market(&cfg)?;
            let first_day = data.first_day().ok_or(Error::EmptyInput("no snapshots"))?;
            let last_day = data.last_day().ok_or(Error::EmptyInput("no snapshots"))?;
            let first = cfg
                .start
                .unwrap_or(first_day + Duration::days(cfg.window_days as i64));
            let last = cfg.end.unwrap_or(last_day);
            (cfg.start, cfg.end) = (Some(first), Some(last));
            let result = rolling_backtest(&data, &bt, &XModel, first, last, |day, secs| {
                eprintln!("{day}: {secs:.2} s");
            })?;
            io::write_backtest(&cfg.out, &result)?;
            write_metadata(&cfg.out, "backtest", &cfg)?;
            for m in result.metrics()? {
                println!(
                    "{} {} mae {:.4} rmse {:.4}",
                    m.model, m.target, m.mae, m.rmse
                );
            }
            println!(
                "seconds per day: mean {:.3}, median {:.3}",
                result.mean_seconds(),
                result.median_seconds()
            );
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_config() => 2,
        Some(e) if e.is_numerical() => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
