//! Per-class autoregressive lasso forecasts of the transformed curves.

pub mod bootstrap;
pub mod design;
pub mod lasso;
pub mod model;
pub mod panel;

pub use design::{
    build_design, standardize, weekday_dummies, DesignSpec, DummyMode, LagSpec, SourceSet, Term,
};
pub use lasso::{soft_threshold, LassoConfig};
pub use model::{
    bootstrap_forecast, fit_all, fit_target, predict_one_step, FitTerm, ForecastVector,
    ForecasterConfig, LassoFit,
};
pub use panel::{Exogenous, ExogenousTable, FeaturePanel, WholesaleOutcome, HOURS};
