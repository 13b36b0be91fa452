//! Rolling evaluation against the similar-day benchmark.

pub mod dm;
pub mod metrics;
pub mod naive;
pub mod rolling;
pub mod synth;

pub use dm::{dm_test, DmResult};
pub use metrics::{mae, rmse};
pub use naive::{naive_forecast, naive_source_day};
pub use rolling::{
    forecast_next_day, rolling_backtest, window_before, BacktestConfig, BacktestResult,
    DayAheadModel, DayContext, ForecastRecord, HourForecast, MarketData, NextDayForecast,
    PerfectForesight, WindowModel, XModel,
};
pub use synth::{generate_market, SyntheticMarket, SyntheticMarketConfig};
