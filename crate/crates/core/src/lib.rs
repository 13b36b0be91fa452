pub mod backtest;
pub mod classes;
pub mod config;
pub mod curve;
pub mod error;
pub mod forecast;
pub mod io;
pub mod preprocess;
pub mod reconstruct;
pub mod units;

pub use curve::{
    intersect, transform, AuctionSnapshot, DemandSide, Equilibrium, Side, StepCurve,
    TransformedSnapshot,
};
pub use error::{Error, Result};
pub use units::{MarketBounds, Price, Volume};
