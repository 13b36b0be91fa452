use chrono::{Duration, NaiveDate};
use rayon::prelude::*;

use super::bootstrap::{bootstrap_mean, hour_stream};
use super::design::{build_design, standardize, weekday_dummies, DesignSpec, DummyMode, Term};
use super::lasso::{fit_bic_lasso, LassoConfig};
use super::panel::{FeaturePanel, HOURS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecasterConfig {
    pub design: DesignSpec,
    pub lasso: LassoConfig,
    pub bootstrap_samples: usize,
    pub seed: u64,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        ForecasterConfig {
            design: DesignSpec::default(),
            lasso: LassoConfig::default(),
            bootstrap_samples: 10_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitTerm {
    /// Index into the design catalog.
    pub column: usize,
    pub term: Term,
    pub coefficient: f64,
    /// Regressor mean over the estimation rows.
    pub mean: f64,
}

/// Fitted model of target `target` at hour `hour`, in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub target: usize,
    pub hour: usize,
    /// Every nonzero coefficient.
    pub terms: Vec<FitTerm>,
    pub y_mean: f64,
    pub lambda: f64,
    /// Residuals over the estimation rows, in panel day order.
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    /// Weekday coding the fit was estimated with.
    pub dummies: DummyMode,
}

impl LassoFit {
    pub fn df(&self) -> usize {
        self.terms.len()
    }

    pub fn intercept(&self) -> f64 {
        self.y_mean
            - self
                .terms
                .iter()
                .map(|t| t.coefficient * t.mean)
                .sum::<f64>()
    }

    /// One-step-ahead forecast for the day after the panel's last day.
    pub fn predict(&self, panel: &FeaturePanel) -> Result<f64> {
        let n = panel.n_days();
        let last = *panel
            .days()
            .last()
            .ok_or(Error::EmptyInput("empty panel"))?;
        let target_day = last + Duration::days(1);
        let mut out = self.y_mean;
        for t in &self.terms {
            let value = match t.term {
                Term::Lag { source, hour, lag } => {
                    if lag > n || source >= panel.n_vars() {
                        return Err(Error::InsufficientHistory(format!(
                            "forecast needs lag {lag} of variable {source} hour {hour}, panel has {n} days"
                        )));
                    }
                    panel.value(source, hour, n - lag)
                }
                Term::Dummy(k) => weekday_dummies(target_day, self.dummies)[k as usize - 2],
            };
            out += t.coefficient * (value - t.mean);
        }
        Ok(out)
    }
}

pub fn fit_target(
    panel: &FeaturePanel,
    target: usize,
    hour: usize,
    cfg: &ForecasterConfig,
) -> Result<LassoFit> {
    let design = build_design(target, hour, panel, &cfg.design)?;
    let s = standardize(&design.x, &design.y)?;
    let fit = fit_bic_lasso(&s, &cfg.lasso)?;
    Ok(LassoFit {
        target,
        hour,
        terms: fit
            .coefficients
            .iter()
            .map(|&(j, b, m)| FitTerm {
                column: j,
                term: design.catalog[j],
                coefficient: b,
                mean: m,
            })
            .collect(),
        y_mean: fit.y_mean,
        lambda: fit.lambda,
        residuals: fit.residuals,
        sigma2: fit.sigma2,
        dummies: cfg.design.dummies,
    })
}

/// All `24 * M` fits, ordered by hour and then target. Fits run in parallel;
/// the output order does not depend on scheduling.
pub fn fit_all(panel: &FeaturePanel, cfg: &ForecasterConfig) -> Result<Vec<LassoFit>> {
    let m = panel.n_targets();
    (0..HOURS * m)
        .into_par_iter()
        .map(|i| fit_target(panel, i % m, i / m, cfg))
        .collect()
}

/// Day-ahead forecasts indexed `hour * n_targets + target`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastVector {
    pub day: NaiveDate,
    pub n_targets: usize,
    pub samples: usize,
    pub values: Vec<f64>,
}

impl ForecastVector {
    pub fn get(&self, hour: usize, target: usize) -> f64 {
        self.values[hour * self.n_targets + target]
    }

    pub fn hour(&self, hour: usize) -> &[f64] {
        &self.values[hour * self.n_targets..(hour + 1) * self.n_targets]
    }
}

fn check_layout(fits: &[LassoFit], panel: &FeaturePanel) -> Result<usize> {
    let m = panel.n_targets();
    if fits.len() != HOURS * m {
        return Err(Error::InvalidParameter(format!(
            "expected {} fits, got {}",
            HOURS * m,
            fits.len()
        )));
    }
    for (i, f) in fits.iter().enumerate() {
        if f.hour != i / m || f.target != i % m {
            return Err(Error::InvalidParameter(
                "fits are not ordered by hour and target".into(),
            ));
        }
    }
    Ok(m)
}

pub fn predict_one_step(fits: &[LassoFit], panel: &FeaturePanel) -> Result<Vec<f64>> {
    check_layout(fits, panel)?;
    fits.iter().map(|f| f.predict(panel)).collect()
}

/// Point forecasts refined by the residual bootstrap, one stream per hour.
pub fn bootstrap_forecast(
    fits: &[LassoFit],
    panel: &FeaturePanel,
    cfg: &ForecasterConfig,
) -> Result<ForecastVector> {
    let m = check_layout(fits, panel)?;
    let point = predict_one_step(fits, panel)?;
    let day = *panel
        .days()
        .last()
        .ok_or(Error::EmptyInput("empty panel"))?
        + Duration::days(1);
    let per_hour: Vec<Vec<f64>> = (0..HOURS)
        .into_par_iter()
        .map(|h| {
            let residuals: Vec<&[f64]> = fits[h * m..(h + 1) * m]
                .iter()
                .map(|f| f.residuals.as_slice())
                .collect();
            let mut rng = hour_stream(cfg.seed, day, h);
            bootstrap_mean(
                &point[h * m..(h + 1) * m],
                &residuals,
                cfg.bootstrap_samples,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = per_hour.into_iter().flatten().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite forecast".into()));
    }
    Ok(ForecastVector {
        day,
        n_targets: m,
        samples: cfg.bootstrap_samples,
        values,
    })
}
