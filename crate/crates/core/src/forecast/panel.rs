use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};

use crate::classes::ClassVolumeVector;
use crate::error::{Error, Result};

pub const HOURS: usize = 24;

/// Auxiliary panel columns that are regressors only.
pub const AUX_NAMES: [&str; 5] = ["price", "volume_diff", "generation", "wind", "solar"];

/// Day-ahead forecasts published for a delivery hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exogenous {
    pub generation: f64,
    pub wind: f64,
    pub solar: f64,
}

pub type ExogenousTable = BTreeMap<(NaiveDate, u8), Exogenous>;

/// Realized wholesale equilibrium of one hour, in EUR/MWh and MWh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WholesaleOutcome {
    pub price: f64,
    pub volume: f64,
}

/// Daily observations of every (variable, hour) series over a window.
///
/// The first `n_targets` variables are forecast targets. Storage keeps each
/// series contiguous over days so lagged design columns are plain slices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePanel {
    days: Vec<NaiveDate>,
    n_targets: usize,
    n_vars: usize,
    data: Vec<f64>,
}

impl FeaturePanel {
    /// `data[(var * 24 + hour) * days.len() + day]`.
    pub fn new(
        days: Vec<NaiveDate>,
        n_targets: usize,
        n_vars: usize,
        data: Vec<f64>,
    ) -> Result<FeaturePanel> {
        if n_targets == 0 || n_targets > n_vars {
            return Err(Error::InvalidParameter(format!(
                "panel needs 1..={n_vars} targets, got {n_targets}"
            )));
        }
        if data.len() != n_vars * HOURS * days.len() {
            return Err(Error::InvalidParameter(
                "panel data has the wrong length".into(),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let per_var = HOURS * days.len();
            let var = i / per_var;
            let hour = (i % per_var) / days.len();
            return Err(Error::CoverageGap {
                day: days[i % days.len()],
                hour: hour as u8,
                column: format!("variable {var}"),
            });
        }
        Ok(FeaturePanel {
            days,
            n_targets,
            n_vars,
            data,
        })
    }

    /// Supply classes, inelastic demand, realized price, volume difference and
    /// the exogenous forecasts for the following day.
    pub fn assemble(
        classes: &[ClassVolumeVector],
        wholesale: &BTreeMap<(NaiveDate, u8), WholesaleOutcome>,
        exogenous: &ExogenousTable,
        days: &[NaiveDate],
    ) -> Result<FeaturePanel> {
        let first = classes
            .first()
            .ok_or(Error::EmptyInput("no class volumes"))?;
        let n_supply = first.supply_classes.len();
        let n_targets = n_supply + 1;
        let n_vars = n_targets + AUX_NAMES.len();
        let n_days = days.len();
        let by_key: BTreeMap<(NaiveDate, u8), &ClassVolumeVector> =
            classes.iter().map(|c| ((c.day, c.hour), c)).collect();
        let mut data = vec![f64::NAN; n_vars * HOURS * n_days];
        let idx = |var: usize, hour: usize, day: usize| (var * HOURS + hour) * n_days + day;
        for (di, &day) in days.iter().enumerate() {
            for h in 0..HOURS {
                let key = (day, h as u8);
                let gap = |column: &str| Error::CoverageGap {
                    day,
                    hour: h as u8,
                    column: column.to_string(),
                };
                let cv = by_key.get(&key).ok_or_else(|| gap("class_volumes"))?;
                if cv.supply_classes.len() != n_supply {
                    return Err(Error::InvalidParameter(
                        "class vectors disagree on class count".into(),
                    ));
                }
                for (c, v) in cv.supply_classes.iter().enumerate() {
                    data[idx(c, h, di)] = v.mwh();
                }
                let demand = cv.demand_volume.mwh();
                data[idx(n_supply, h, di)] = demand;
                let ws = wholesale.get(&key).ok_or_else(|| gap("price"))?;
                data[idx(n_targets, h, di)] = ws.price;
                data[idx(n_targets + 1, h, di)] = demand - ws.volume;
                let next = (day + Duration::days(1), h as u8);
                let ex = exogenous.get(&next).ok_or_else(|| Error::CoverageGap {
                    day: next.0,
                    hour: h as u8,
                    column: "exogenous".into(),
                })?;
                data[idx(n_targets + 2, h, di)] = ex.generation;
                data[idx(n_targets + 3, h, di)] = ex.wind;
                data[idx(n_targets + 4, h, di)] = ex.solar;
            }
        }
        FeaturePanel::new(days.to_vec(), n_targets, n_vars, data)
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Index of the volume-difference column, if this panel carries auxiliaries.
    pub fn volume_diff_var(&self) -> Option<usize> {
        (self.n_vars == self.n_targets + AUX_NAMES.len()).then_some(self.n_targets + 1)
    }

    pub fn series(&self, var: usize, hour: usize) -> &[f64] {
        let n = self.days.len();
        let start = (var * HOURS + hour) * n;
        &self.data[start..start + n]
    }

    pub fn value(&self, var: usize, hour: usize, day: usize) -> f64 {
        self.series(var, hour)[day]
    }

    pub fn var_name(&self, var: usize) -> String {
        if var + 1 < self.n_targets {
            format!("supply_class_{}", var + 1)
        } else if var + 1 == self.n_targets {
            "demand".into()
        } else {
            AUX_NAMES
                .get(var - self.n_targets)
                .map_or_else(|| format!("aux_{var}"), |s| s.to_string())
        }
    }
}
