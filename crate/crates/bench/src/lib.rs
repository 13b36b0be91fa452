//! Fixtures shared by the benchmarks.

use chrono::Duration;
use curvecast::backtest::{
    generate_market, window_before, BacktestConfig, MarketData, SyntheticMarketConfig, WindowModel,
};
use curvecast::forecast::design::{build_design, standardize, Standardized};
use curvecast::{transform, AuctionSnapshot, MarketBounds, TransformedSnapshot};

pub struct Fixture {
    pub bounds: MarketBounds,
    pub data: MarketData,
    pub config: BacktestConfig,
    pub window: WindowModel,
}

/// Synthetic market of `n_days` with one built window ending at the last day.
pub fn fixture(n_days: usize, window_days: usize, bootstrap_samples: usize) -> Fixture {
    let bounds = MarketBounds::default();
    let market = generate_market(
        &SyntheticMarketConfig {
            n_days,
            ..SyntheticMarketConfig::default()
        },
        &bounds,
    )
    .expect("synthetic market");
    let data = MarketData::new(market.snapshots, market.exogenous).expect("market data");
    let mut config = BacktestConfig {
        window_days,
        ..BacktestConfig::default()
    };
    config.forecaster.bootstrap_samples = bootstrap_samples;
    let target = data.last_day().expect("days") + Duration::days(1);
    let window = WindowModel::build(&data, &window_before(target, window_days), &config, None)
        .expect("window model");
    Fixture {
        bounds,
        data,
        config,
        window,
    }
}

impl Fixture {
    pub fn snapshots(&self) -> &[AuctionSnapshot] {
        self.data.snapshots()
    }

    pub fn transformed(&self) -> Vec<TransformedSnapshot> {
        self.snapshots()
            .iter()
            .map(|s| transform(s, &self.bounds).expect("transform"))
            .collect()
    }

    /// Standardized design of one class model.
    pub fn design(&self, target: usize, hour: usize) -> Standardized {
        let d = build_design(
            target,
            hour,
            &self.window.panel,
            &self.config.forecaster.design,
        )
        .expect("design");
        standardize(&d.x, &d.y).expect("standardize")
    }
}
