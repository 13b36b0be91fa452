//! Clock-change normalization and cleaning of the extreme price bins.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};

use crate::curve::{AuctionSnapshot, Side, StepCurve};
use crate::error::{Error, Result};
use crate::units::{MarketBounds, Price, Volume};

/// Hour label marking the second occurrence of the repeated autumn hour.
pub const REPEATED_HOUR: u8 = 24;

/// Days on which the clock changes and the hour that is skipped or repeated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DstCalendar {
    pub spring: BTreeSet<NaiveDate>,
    pub autumn: BTreeSet<NaiveDate>,
    pub hour: u8,
}

impl DstCalendar {
    pub fn none() -> DstCalendar {
        DstCalendar {
            hour: 2,
            ..Default::default()
        }
    }

    /// Central European rule: last Sundays of March and October, 02:00 local.
    pub fn european(first_year: i32, last_year: i32) -> DstCalendar {
        let last_sunday = |year: i32, month: u32| {
            let next = if month == 12 {
                NaiveDate::from_ymd_opt(year + 1, 1, 1)
            } else {
                NaiveDate::from_ymd_opt(year, month + 1, 1)
            }
            .unwrap();
            let mut d = next - Duration::days(1);
            while d.weekday() != Weekday::Sun {
                d -= Duration::days(1);
            }
            d
        };
        DstCalendar {
            spring: (first_year..=last_year)
                .map(|y| last_sunday(y, 3))
                .collect(),
            autumn: (first_year..=last_year)
                .map(|y| last_sunday(y, 10))
                .collect(),
            hour: 2,
        }
    }
}

/// Exactly 24 values per included day.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlySeries {
    pub label: String,
    pub values: BTreeMap<(NaiveDate, u8), f64>,
}

impl HourlySeries {
    pub fn new(label: impl Into<String>) -> HourlySeries {
        HourlySeries {
            label: label.into(),
            values: BTreeMap::new(),
        }
    }

    pub fn get(&self, day: NaiveDate, hour: u8) -> Option<f64> {
        self.values.get(&(day, hour)).copied()
    }

    pub fn days(&self) -> BTreeSet<NaiveDate> {
        self.values.keys().map(|k| k.0).collect()
    }
}

/// Raw observations as delivered, where hour [`REPEATED_HOUR`] may appear on
/// autumn transition days and the skipped hour is absent in spring.
pub fn adjust_clock_change(
    label: &str,
    observations: &[(NaiveDate, u8, f64)],
    calendar: &DstCalendar,
) -> Result<HourlySeries> {
    let mut raw: BTreeMap<(NaiveDate, u8), f64> = BTreeMap::new();
    for &(day, hour, value) in observations {
        if hour > REPEATED_HOUR || (hour == REPEATED_HOUR && !calendar.autumn.contains(&day)) {
            return Err(Error::InvalidParameter(format!(
                "{label}: hour {hour} on {day}"
            )));
        }
        if raw.insert((day, hour), value).is_some() {
            return Err(Error::InvalidParameter(format!(
                "{label}: duplicate hour {hour} on {day}"
            )));
        }
    }
    let days: BTreeSet<NaiveDate> = raw.keys().map(|k| k.0).collect();
    let mut out = HourlySeries::new(label);
    let mut gaps = Vec::new();
    for day in days {
        for hour in 0..24u8 {
            let value = match raw.get(&(day, hour)) {
                Some(&v) if hour == calendar.hour && calendar.autumn.contains(&day) => {
                    match raw.get(&(day, REPEATED_HOUR)) {
                        Some(&second) => (v + second) / 2.0,
                        None => v,
                    }
                }
                Some(&v) => v,
                None if hour == calendar.hour && calendar.spring.contains(&day) => {
                    let before = hour.checked_sub(1).and_then(|h| raw.get(&(day, h)));
                    let after = raw.get(&(day, hour + 1));
                    match (before, after) {
                        (Some(a), Some(b)) => (a + b) / 2.0,
                        _ => {
                            gaps.push((day, hour));
                            continue;
                        }
                    }
                }
                None => {
                    gaps.push((day, hour));
                    continue;
                }
            };
            out.values.insert((day, hour), value);
        }
    }
    if !gaps.is_empty() {
        return Err(Error::MissingHours(gaps));
    }
    Ok(out)
}

/// Applies the clock-change rule to whole auction curves: the skipped spring
/// hour becomes the average of its neighbours, the repeated autumn hour the
/// average of its two occurrences.
pub fn adjust_snapshots(
    raw: BTreeMap<(NaiveDate, u8), (StepCurve, StepCurve)>,
    calendar: &DstCalendar,
) -> Result<Vec<AuctionSnapshot>> {
    let days: BTreeSet<NaiveDate> = raw.keys().map(|k| k.0).collect();
    let mut out = Vec::with_capacity(days.len() * 24);
    let mut gaps = Vec::new();
    for day in days {
        for hour in 0..24u8 {
            let pair = match raw.get(&(day, hour)) {
                Some((s, d)) if hour == calendar.hour && calendar.autumn.contains(&day) => {
                    match raw.get(&(day, REPEATED_HOUR)) {
                        Some((s2, d2)) => (StepCurve::average(s, s2)?, StepCurve::average(d, d2)?),
                        None => (s.clone(), d.clone()),
                    }
                }
                Some((s, d)) => (s.clone(), d.clone()),
                None if hour == calendar.hour && calendar.spring.contains(&day) => {
                    let before = hour.checked_sub(1).and_then(|h| raw.get(&(day, h)));
                    match (before, raw.get(&(day, hour + 1))) {
                        (Some((s1, d1)), Some((s2, d2))) => {
                            (StepCurve::average(s1, s2)?, StepCurve::average(d1, d2)?)
                        }
                        _ => {
                            gaps.push((day, hour));
                            continue;
                        }
                    }
                }
                None => {
                    gaps.push((day, hour));
                    continue;
                }
            };
            out.push(AuctionSnapshot::new(day, hour, pair.0, pair.1)?);
        }
    }
    if let Some(&(day, _)) = raw
        .keys()
        .find(|k| k.1 == REPEATED_HOUR && !calendar.autumn.contains(&k.0))
    {
        return Err(Error::InvalidParameter(format!(
            "repeated hour on non-transition day {day}"
        )));
    }
    if !gaps.is_empty() {
        return Err(Error::MissingHours(gaps));
    }
    Ok(out)
}

const N_REGRESSORS: usize = 8;

/// Per-hour expert regression of an extreme bin on its own lags 1, 2 and 7,
/// Monday/Saturday/Sunday dummies and the neighbouring bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertModel {
    pub hours: BTreeMap<u8, HourModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HourModel {
    Regression {
        coefficients: [f64; N_REGRESSORS],
        sigma: f64,
    },
    /// Singular design: the neighbour value stands in for the fit.
    NeighborFallback { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CleanAction {
    Replaced,
    ReplacedByNeighbor,
}

impl CleanAction {
    pub fn label(self) -> &'static str {
        match self {
            CleanAction::Replaced => "replaced",
            CleanAction::ReplacedByNeighbor => "replaced_by_neighbor",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierFlag {
    pub day: NaiveDate,
    pub hour: u8,
    pub observed: f64,
    pub fitted: f64,
    pub sigma: f64,
    pub action: CleanAction,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutlierReport {
    pub flagged: Vec<OutlierFlag>,
    pub replaced_count: usize,
    pub fallback_hours: Vec<u8>,
}

fn regressors(
    target: &HourlySeries,
    neighbor: &HourlySeries,
    day: NaiveDate,
    hour: u8,
) -> Option<[f64; N_REGRESSORS]> {
    let lag = |k: i64| target.get(day - Duration::days(k), hour);
    let wd = day.weekday();
    Some([
        1.0,
        lag(1)?,
        lag(2)?,
        lag(7)?,
        f64::from(wd == Weekday::Mon),
        f64::from(wd == Weekday::Sat),
        f64::from(wd == Weekday::Sun),
        neighbor.get(day, hour)?,
    ])
}

fn usable_rows(
    target: &HourlySeries,
    neighbor: &HourlySeries,
    hour: u8,
) -> Vec<(NaiveDate, [f64; N_REGRESSORS], f64)> {
    target
        .values
        .range((NaiveDate::MIN, hour)..)
        .filter(|((_, h), _)| *h == hour)
        .filter_map(|(&(day, _), &y)| regressors(target, neighbor, day, hour).map(|x| (day, x, y)))
        .collect()
}

pub fn fit_expert_model(target: &HourlySeries, neighbor: &HourlySeries) -> Result<ExpertModel> {
    let days = target.days();
    if days.len() < 8 {
        return Err(Error::InsufficientHistory(format!(
            "{}: {} days, cleaning needs at least 8",
            target.label,
            days.len()
        )));
    }
    let hours: BTreeSet<u8> = target.values.keys().map(|k| k.1).collect();
    let mut out = BTreeMap::new();
    for hour in hours {
        let rows = usable_rows(target, neighbor, hour);
        out.insert(hour, fit_hour(&rows));
    }
    Ok(ExpertModel { hours: out })
}

fn fit_hour(rows: &[(NaiveDate, [f64; N_REGRESSORS], f64)]) -> HourModel {
    let n = rows.len();
    let fallback = || {
        let resid: Vec<f64> = rows
            .iter()
            .map(|(_, x, y)| y - x[N_REGRESSORS - 1])
            .collect();
        HourModel::NeighborFallback {
            sigma: std_dev(&resid, 0),
        }
    };
    if n <= N_REGRESSORS {
        return fallback();
    }
    let x = DMatrix::from_fn(n, N_REGRESSORS, |r, c| rows[r].1[c]);
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.2));
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.rank(smax * 1e-10) < N_REGRESSORS {
        return fallback();
    }
    let beta = match svd.solve(&y, smax * 1e-10) {
        Ok(b) => b,
        Err(_) => return fallback(),
    };
    let resid: Vec<f64> = (&y - &x * &beta).iter().copied().collect();
    let mut coefficients = [0.0; N_REGRESSORS];
    coefficients.copy_from_slice(beta.as_slice());
    HourModel::Regression {
        coefficients,
        sigma: std_dev(&resid, N_REGRESSORS),
    }
}

fn std_dev(resid: &[f64], dof_used: usize) -> f64 {
    let n = resid.len();
    if n <= dof_used {
        return 0.0;
    }
    let mean = resid.iter().sum::<f64>() / n as f64;
    let ss: f64 = resid.iter().map(|r| (r - mean).powi(2)).sum();
    let denom = if dof_used == 0 { n } else { n - dof_used };
    (ss / denom as f64).sqrt()
}

/// Flags observations whose residual exceeds `k_sigma` standard deviations
/// and replaces them with the fitted value. Lags are taken from the input.
pub fn apply_expert_model(
    model: &ExpertModel,
    target: &HourlySeries,
    neighbor: &HourlySeries,
    k_sigma: f64,
) -> (HourlySeries, OutlierReport) {
    let mut cleaned = target.clone();
    let mut report = OutlierReport::default();
    for (&hour, hm) in &model.hours {
        if matches!(hm, HourModel::NeighborFallback { .. }) {
            report.fallback_hours.push(hour);
        }
        for (day, x, y) in usable_rows(target, neighbor, hour) {
            let (fitted, sigma, action) = match hm {
                HourModel::Regression {
                    coefficients,
                    sigma,
                } => (
                    coefficients.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>(),
                    *sigma,
                    CleanAction::Replaced,
                ),
                HourModel::NeighborFallback { sigma } => {
                    (x[N_REGRESSORS - 1], *sigma, CleanAction::ReplacedByNeighbor)
                }
            };
            if (y - fitted).abs() > k_sigma * sigma {
                cleaned.values.insert((day, hour), fitted);
                report.flagged.push(OutlierFlag {
                    day,
                    hour,
                    observed: y,
                    fitted,
                    sigma,
                    action,
                });
            }
        }
    }
    report.flagged.sort_by_key(|f| (f.day, f.hour));
    report.replaced_count = report.flagged.len();
    (cleaned, report)
}

pub fn clean_extreme_bin(
    target: &HourlySeries,
    neighbor: &HourlySeries,
    k_sigma: f64,
) -> Result<(HourlySeries, OutlierReport)> {
    if !(k_sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "k_sigma must be positive, got {k_sigma}"
        )));
    }
    let model = fit_expert_model(target, neighbor)?;
    Ok(apply_expert_model(&model, target, neighbor, k_sigma))
}

/// Distance in EUR/MWh from the price limit to the neighbouring regressor bin.
pub const NEIGHBOR_OFFSET_EUR: f64 = 5.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnapshotCleaning {
    pub supply: OutlierReport,
    pub demand: OutlierReport,
}

fn bid_at(curve: &StepCurve, price: Price) -> f64 {
    curve
        .bids()
        .into_iter()
        .find(|(p, _)| *p == price)
        .map_or(0.0, |(_, v)| v.mwh())
}

fn bids_in(curve: &StepCurve, lo_excl: Price, hi_incl: Price) -> f64 {
    curve
        .bids()
        .into_iter()
        .filter(|(p, _)| *p > lo_excl && *p <= hi_incl)
        .map(|(_, v)| v.mwh())
        .sum()
}

/// Cleans the supply bid at the price floor and the demand bid at the cap.
///
/// The neighbour regressor is the bid volume within five EUR of the limit.
pub fn clean_snapshots(
    snapshots: &[AuctionSnapshot],
    bounds: &MarketBounds,
    k_sigma: f64,
) -> Result<(Vec<AuctionSnapshot>, SnapshotCleaning)> {
    let p_min = bounds.p_min();
    let p_max = bounds.p_max();
    let s_edge = bounds.offset(p_min, NEIGHBOR_OFFSET_EUR);
    let d_edge = bounds.offset(p_max, -NEIGHBOR_OFFSET_EUR);

    let mut s_target = HourlySeries::new("supply@p_min");
    let mut s_neigh = HourlySeries::new("supply@p_min+5");
    let mut d_target = HourlySeries::new("demand@p_max");
    let mut d_neigh = HourlySeries::new("demand@p_max-5");
    for s in snapshots {
        let key = (s.day, s.hour);
        s_target.values.insert(key, bid_at(&s.supply, p_min));
        s_neigh
            .values
            .insert(key, bids_in(&s.supply, p_min, s_edge));
        d_target.values.insert(key, bid_at(&s.demand, p_max));
        d_neigh.values.insert(
            key,
            bids_in(
                &s.demand,
                Price(d_edge.ticks() - 1),
                Price(p_max.ticks() - 1),
            ),
        );
    }
    let (s_clean, s_report) = clean_extreme_bin(&s_target, &s_neigh, k_sigma)?;
    let (d_clean, d_report) = clean_extreme_bin(&d_target, &d_neigh, k_sigma)?;

    let replace = |curve: &StepCurve, price: Price, value: f64| -> Result<StepCurve> {
        let mut bids = curve.bids();
        bids.retain(|(p, _)| *p != price);
        bids.push((price, Volume::from_mwh(value.max(0.0))));
        StepCurve::from_tick_bids(bids, curve.side(), bounds)
    };
    let touched_s: BTreeSet<(NaiveDate, u8)> =
        s_report.flagged.iter().map(|f| (f.day, f.hour)).collect();
    let touched_d: BTreeSet<(NaiveDate, u8)> =
        d_report.flagged.iter().map(|f| (f.day, f.hour)).collect();
    let mut out = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        let key = (s.day, s.hour);
        let mut snap = s.clone();
        if touched_s.contains(&key) {
            snap.supply = replace(&s.supply, p_min, s_clean.values[&key])?;
        }
        if touched_d.contains(&key) {
            snap.demand = replace(&s.demand, p_max, d_clean.values[&key])?;
        }
        debug_assert_eq!(snap.supply.side(), Side::Supply);
        out.push(snap);
    }
    Ok((
        out,
        SnapshotCleaning {
            supply: s_report,
            demand: d_report,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn european_calendar_2017() {
        let c = DstCalendar::european(2017, 2017);
        assert!(c.spring.contains(&d(2017, 3, 26)));
        assert!(c.autumn.contains(&d(2017, 10, 29)));
    }

    #[test]
    fn spring_gap_is_neighbour_mean() {
        let day = d(2017, 3, 26);
        let cal = DstCalendar::european(2017, 2017);
        let obs: Vec<_> = (0..24u8)
            .filter(|h| *h != 2)
            .map(|h| {
                (
                    day,
                    h,
                    if h == 1 {
                        100.0
                    } else if h == 3 {
                        200.0
                    } else {
                        1.0
                    },
                )
            })
            .collect();
        let s = adjust_clock_change("x", &obs, &cal).unwrap();
        assert_eq!(s.get(day, 2), Some(150.0));
        assert_eq!(s.values.len(), 24);
    }

    #[test]
    fn autumn_double_hour_is_averaged() {
        let day = d(2017, 10, 29);
        let cal = DstCalendar::european(2017, 2017);
        let mut obs: Vec<_> = (0..24u8)
            .map(|h| (day, h, if h == 2 { 90.0 } else { 5.0 }))
            .collect();
        obs.push((day, REPEATED_HOUR, 110.0));
        let s = adjust_clock_change("x", &obs, &cal).unwrap();
        assert_eq!(s.get(day, 2), Some(100.0));
        assert_eq!(s.values.len(), 24);
    }

    #[test]
    fn no_transition_is_identity_and_gaps_error() {
        let day = d(2017, 5, 3);
        let cal = DstCalendar::european(2017, 2017);
        let obs: Vec<_> = (0..24u8).map(|h| (day, h, h as f64 * 1.5)).collect();
        let s = adjust_clock_change("x", &obs, &cal).unwrap();
        for (dd, h, v) in &obs {
            assert_eq!(s.get(*dd, *h), Some(*v));
        }
        let missing: Vec<_> = obs.iter().copied().filter(|o| o.1 != 5).collect();
        match adjust_clock_change("x", &missing, &cal) {
            Err(Error::MissingHours(g)) => assert_eq!(g, vec![(day, 5)]),
            other => panic!("{other:?}"),
        }
    }

    fn synthetic_pair(n_days: i64, seed: u64) -> (HourlySeries, HourlySeries) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = HourlySeries::new("t");
        let mut nb = HourlySeries::new("n");
        let start = d(2016, 1, 1);
        for i in 0..n_days {
            let day = start + Duration::days(i);
            for h in 0..2u8 {
                let neighbor = 1000.0 + 300.0 * rng.random::<f64>();
                // Bounded noise keeps every clean residual well inside 3 sigma.
                let noise: f64 = rng.random_range(-1.0..1.0);
                t.values
                    .insert((day, h), 500.0 + 3.0 * neighbor + 10.0 * noise);
                nb.values.insert((day, h), neighbor);
            }
        }
        (t, nb)
    }

    #[test]
    fn perfect_fit_flags_nothing() {
        let start = d(2016, 1, 4);
        let mut t = HourlySeries::new("t");
        let mut nb = HourlySeries::new("n");
        for i in 0..70 {
            let day = start + Duration::days(i);
            let v = [10.0, 12.0, 15.0, 11.0, 9.0, 4.0, 3.0][(i % 7) as usize];
            t.values.insert((day, 0), v);
            nb.values.insert((day, 0), v);
        }
        let (out, rep) = clean_extreme_bin(&t, &nb, 3.0).unwrap();
        assert_eq!(rep.replaced_count, 0);
        assert_eq!(out, t);
    }

    #[test]
    fn injected_spike_is_the_only_flag() {
        let (mut t, nb) = synthetic_pair(200, 7);
        let spike_day = d(2016, 1, 1) + Duration::days(120);
        let clean_value = t.get(spike_day, 1).unwrap();
        t.values.insert((spike_day, 1), clean_value + 200.0);
        let (out, rep) = clean_extreme_bin(&t, &nb, 3.0).unwrap();
        assert_eq!(rep.replaced_count, 1, "{:?}", rep.flagged);
        assert_eq!((rep.flagged[0].day, rep.flagged[0].hour), (spike_day, 1));
        assert!((out.get(spike_day, 1).unwrap() - clean_value).abs() < 40.0);
        for (k, v) in &t.values {
            if *k != (spike_day, 1) {
                assert_eq!(out.values[k].to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn infinite_threshold_changes_nothing() {
        let (mut t, nb) = synthetic_pair(60, 3);
        t.values.insert((d(2016, 1, 30), 0), 1e6);
        let (out, rep) = clean_extreme_bin(&t, &nb, f64::INFINITY).unwrap();
        assert_eq!(rep.replaced_count, 0);
        assert_eq!(out, t);
    }

    #[test]
    fn cleaning_is_idempotent_at_fixed_model() {
        let (mut t, nb) = synthetic_pair(150, 11);
        t.values.insert((d(2016, 3, 1), 0), 9000.0);
        let model = fit_expert_model(&t, &nb).unwrap();
        let (once, rep) = apply_expert_model(&model, &t, &nb, 3.0);
        assert!(rep.replaced_count >= 1);
        let (_, again) = apply_expert_model(&model, &once, &nb, 3.0);
        assert_eq!(again.replaced_count, 0, "{:?}", again.flagged);
        let (_, rep2) = apply_expert_model(&model, &t, &nb, 3.0);
        assert_eq!(rep, rep2);
    }

    #[test]
    fn constant_series_falls_back() {
        let start = d(2016, 1, 1);
        let mut t = HourlySeries::new("t");
        let mut nb = HourlySeries::new("n");
        for i in 0..30 {
            t.values.insert((start + Duration::days(i), 0), 5.0);
            nb.values.insert((start + Duration::days(i), 0), 5.0);
        }
        let (out, rep) = clean_extreme_bin(&t, &nb, 3.0).unwrap();
        assert_eq!(rep.fallback_hours, vec![0]);
        assert_eq!(out, t);
    }

    #[test]
    fn short_history_is_rejected() {
        let (t, nb) = synthetic_pair(5, 1);
        assert!(matches!(
            clean_extreme_bin(&t, &nb, 3.0),
            Err(Error::InsufficientHistory(_))
        ));
    }
}
