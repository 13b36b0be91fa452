//! Lagged regression designs for one (target, hour) model.

use chrono::{Datelike, NaiveDate};

use super::panel::{FeaturePanel, HOURS};
use crate::error::{Error, Result};

/// How the six weekday regressors are coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DummyMode {
    /// `W_k(d) = 1` iff the weekday number (Monday = 1) is below `k`.
    #[default]
    AsPrinted,
    /// `W_k(d) = 1` iff the weekday number equals `k`.
    OneHot,
}

impl DummyMode {
    pub fn name(self) -> &'static str {
        match self {
            DummyMode::AsPrinted => "as-printed",
            DummyMode::OneHot => "one-hot",
        }
    }
}

/// `W_2(d) ..= W_7(d)`.
pub fn weekday_dummies(day: NaiveDate, mode: DummyMode) -> [f64; 6] {
    let w = day.weekday().number_from_monday();
    let mut out = [0.0; 6];
    for (i, slot) in out.iter_mut().enumerate() {
        let k = i as u32 + 2;
        let on = match mode {
            DummyMode::AsPrinted => w < k,
            DummyMode::OneHot => w == k,
        };
        *slot = f64::from(on);
    }
    out
}

/// Which panel variables may appear as lagged regressors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceSet {
    /// Only the forecast targets.
    Targets,
    /// Every panel column, auxiliaries included.
    #[default]
    FullPanel,
}

impl SourceSet {
    pub fn count(self, panel: &FeaturePanel) -> usize {
        match self {
            SourceSet::Targets => panel.n_targets(),
            SourceSet::FullPanel => panel.n_vars(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SourceSet::Targets => "targets",
            SourceSet::FullPanel => "full-panel",
        }
    }
}

/// Lag depths: own series and hour, same series or same hour, anything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagSpec {
    pub own: usize,
    pub shared: usize,
    pub other: usize,
}

impl Default for LagSpec {
    fn default() -> Self {
        LagSpec {
            own: 36,
            shared: 8,
            other: 1,
        }
    }
}

impl LagSpec {
    /// Largest lag `k` such that lags `1..=k` enter for source `(l, j)`.
    pub fn depth(&self, target: usize, hour: usize, source: usize, source_hour: usize) -> usize {
        match (target == source, hour == source_hour) {
            (true, true) => self.own,
            (true, false) | (false, true) => self.shared,
            (false, false) => self.other,
        }
    }

    pub fn max_lag(&self) -> usize {
        self.own.max(self.shared).max(self.other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Lag {
        source: usize,
        hour: usize,
        lag: usize,
    },
    /// Weekday regressor `W_k`, `k` in 2..=7.
    Dummy(u8),
}

impl Term {
    pub fn describe(&self) -> String {
        match self {
            Term::Lag { source, hour, lag } => format!("({source},{hour},{lag})"),
            Term::Dummy(k) => format!("dummy {k}"),
        }
    }
}

/// Every regressor of model `(target, hour)`, lagged terms first.
pub fn catalog(target: usize, hour: usize, n_sources: usize, lags: &LagSpec) -> Vec<Term> {
    let mut out = Vec::new();
    for source in 0..n_sources {
        for source_hour in 0..HOURS {
            for lag in 1..=lags.depth(target, hour, source, source_hour) {
                out.push(Term::Lag {
                    source,
                    hour: source_hour,
                    lag,
                });
            }
        }
    }
    out.extend((2..=7).map(Term::Dummy));
    out
}

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl ColMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> ColMatrix {
        ColMatrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_columns(n_rows: usize, columns: &[Vec<f64>]) -> ColMatrix {
        let mut m = ColMatrix::zeros(n_rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            m.col_mut(j).copy_from_slice(c);
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.n_rows + row]
    }

    /// `X * beta`.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (o, x) in out.iter_mut().zip(self.col(j)) {
                    *o += b * x;
                }
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    /// Raw target values, one per usable day.
    pub y: Vec<f64>,
    pub x: ColMatrix,
    pub catalog: Vec<Term>,
    /// Panel day index of each row.
    pub row_days: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DesignSpec {
    pub lags: LagSpec,
    pub sources: SourceSet,
    pub dummies: DummyMode,
}

/// Rows are the days with a full lag history inside the panel.
pub fn build_design(
    target: usize,
    hour: usize,
    panel: &FeaturePanel,
    spec: &DesignSpec,
) -> Result<Design> {
    let max_lag = spec.lags.max_lag();
    let n_days = panel.n_days();
    if n_days < max_lag + 2 {
        return Err(Error::WindowTooShort {
            rows: n_days,
            required: max_lag + 2,
        });
    }
    if target >= panel.n_targets() || hour >= HOURS {
        return Err(Error::InvalidParameter(format!(
            "no target ({target}, {hour}) in panel"
        )));
    }
    let n_sources = spec.sources.count(panel);
    let catalog = catalog(target, hour, n_sources, &spec.lags);
    let rows = n_days - max_lag;
    let mut x = ColMatrix::zeros(rows, catalog.len());
    for (j, term) in catalog.iter().enumerate() {
        let col = x.col_mut(j);
        match *term {
            Term::Lag {
                source,
                hour: sh,
                lag,
            } => {
                let series = panel.series(source, sh);
                col.copy_from_slice(&series[max_lag - lag..n_days - lag]);
            }
            Term::Dummy(k) => {
                for (r, v) in col.iter_mut().enumerate() {
                    *v = weekday_dummies(panel.days()[max_lag + r], spec.dummies)[k as usize - 2];
                }
            }
        }
    }
    Ok(Design {
        y: panel.series(target, hour)[max_lag..].to_vec(),
        x,
        catalog,
        row_days: (max_lag..n_days).collect(),
    })
}

/// Centered, unit-variance design and target.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub x: ColMatrix,
    pub y: Vec<f64>,
    pub col_means: Vec<f64>,
    pub col_scales: Vec<f64>,
    /// Zero-variance columns: scaled by one and excluded from estimation.
    pub constant: Vec<bool>,
    pub y_mean: f64,
    pub y_scale: f64,
    pub y_constant: bool,
}

fn mean_and_scale(v: &[f64]) -> (f64, f64, bool) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    // Population variance.
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let scale = var.sqrt();
    if scale <= 1e-12 * mean.abs().max(1.0) {
        (mean, 1.0, true)
    } else {
        (mean, scale, false)
    }
}

pub fn standardize(x: &ColMatrix, y: &[f64]) -> Result<Standardized> {
    if x.n_rows() < 2 {
        return Err(Error::InvalidParameter(
            "standardizing needs at least two rows".into(),
        ));
    }
    let mut out = ColMatrix::zeros(x.n_rows(), x.n_cols());
    let mut col_means = Vec::with_capacity(x.n_cols());
    let mut col_scales = Vec::with_capacity(x.n_cols());
    let mut constant = Vec::with_capacity(x.n_cols());
    for j in 0..x.n_cols() {
        let src = x.col(j);
        let (mean, scale, is_const) = mean_and_scale(src);
        let dst = out.col_mut(j);
        if is_const {
            dst.fill(0.0);
        } else {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (s - mean) / scale;
            }
        }
        col_means.push(mean);
        col_scales.push(scale);
        constant.push(is_const);
    }
    let (y_mean, y_scale, y_constant) = mean_and_scale(y);
    let ys = y.iter().map(|v| (v - y_mean) / y_scale).collect();
    Ok(Standardized {
        x: out,
        y: ys,
        col_means,
        col_scales,
        constant,
        y_mean,
        y_scale,
        y_constant,
    })
}

impl Standardized {
    /// Maps a standardized column back to original units.
    pub fn restore_column(&self, j: usize) -> Vec<f64> {
        self.x
            .col(j)
            .iter()
            .map(|v| v * self.col_scales[j] + self.col_means[j])
            .collect()
    }

    pub fn restore_y(&self) -> Vec<f64> {
        self.y
            .iter()
            .map(|v| v * self.y_scale + self.y_mean)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;
    use std::collections::HashSet;

    #[test]
    fn dummies_as_printed() {
        let monday = NaiveDate::from_ymd_opt(2017, 1, 2).unwrap();
        assert_eq!(weekday_dummies(monday, DummyMode::AsPrinted), [1.0; 6]);
        let sunday = monday + Duration::days(6);
        assert_eq!(weekday_dummies(sunday, DummyMode::AsPrinted), [0.0; 6]);
        let thursday = monday + Duration::days(3);
        assert_eq!(
            weekday_dummies(thursday, DummyMode::AsPrinted),
            [0.0, 0.0, 0.0, 1.0, 1.0, 1.0]
        );
        assert_eq!(
            weekday_dummies(thursday, DummyMode::OneHot),
            [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(weekday_dummies(monday, DummyMode::OneHot), [0.0; 6]);
    }

    #[test]
    fn column_count_for_twenty_targets() {
        let cat = catalog(3, 10, 20, &LagSpec::default());
        // Enumerate the lag rule independently.
        let mut expected = 0;
        for l in 0..20 {
            for j in 0..24 {
                expected += match (l == 3, j == 10) {
                    (true, true) => 36,
                    (true, false) | (false, true) => 8,
                    _ => 1,
                };
            }
        }
        assert_eq!(expected, 809);
        assert_eq!(cat.len(), 809 + 6);
        let unique: HashSet<_> = cat.iter().collect();
        assert_eq!(unique.len(), cat.len());
    }

    #[test]
    fn single_series_column_count() {
        let lags = LagSpec::default();
        let own: usize = (0..1).map(|j| lags.depth(0, 0, 0, j)).sum();
        assert_eq!(own, 36);
    }

    #[test]
    fn design_rows_and_columns_line_up() {
        let n_days = 40;
        let days: Vec<_> = (0..n_days)
            .map(|i| NaiveDate::from_ymd_opt(2016, 1, 1).unwrap() + Duration::days(i as i64))
            .collect();
        let mut data = vec![0.0; 2 * 24 * n_days];
        for (i, v) in data.iter_mut().enumerate() {
            *v = i as f64;
        }
        let panel = FeaturePanel::new(days, 1, 2, data).unwrap();
        let spec = DesignSpec::default();
        let d = build_design(0, 5, &panel, &spec).unwrap();
        assert_eq!(d.x.n_rows(), 4);
        assert_eq!(d.y, panel.series(0, 5)[36..].to_vec());
        for (j, term) in d.catalog.iter().enumerate() {
            if let Term::Lag { source, hour, lag } = *term {
                for r in 0..4 {
                    assert_eq!(d.x.get(r, j), panel.value(source, hour, 36 + r - lag));
                }
            }
        }
        let short =
            FeaturePanel::new(panel.days()[..37].to_vec(), 1, 2, vec![0.0; 2 * 24 * 37]).unwrap();
        assert!(matches!(
            build_design(0, 0, &short, &spec),
            Err(Error::WindowTooShort { required: 38, .. })
        ));
    }

    #[test]
    fn two_point_standardization() {
        let x = ColMatrix::from_columns(2, &[vec![1.0, 3.0], vec![4.0, 4.0]]);
        let s = standardize(&x, &[2.0, 6.0]).unwrap();
        assert_eq!(s.x.col(0), &[-1.0, 1.0]);
        assert!(s.constant[1] && !s.constant[0]);
        assert_eq!(s.x.col(1), &[0.0, 0.0]);
        assert_eq!(s.col_scales[1], 1.0);
        assert_eq!(s.y, vec![-1.0, 1.0]);
        assert_eq!(s.restore_column(0), vec![1.0, 3.0]);
        assert_eq!(s.restore_column(1), vec![4.0, 4.0]);
        assert_eq!(s.restore_y(), vec![2.0, 6.0]);
    }
}
