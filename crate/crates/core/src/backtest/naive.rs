//! Similar-day benchmark.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate, Weekday};

use crate::error::{Error, Result};

/// Source day of the benchmark: yesterday for Tuesday to Friday, the same
/// weekday one week back for Monday, Saturday and Sunday.
pub fn naive_source_day(target: NaiveDate) -> NaiveDate {
    match target.weekday() {
        Weekday::Mon | Weekday::Sat | Weekday::Sun => target - Duration::days(7),
        _ => target - Duration::days(1),
    }
}

pub fn naive_forecast(
    history: &BTreeMap<NaiveDate, [f64; 24]>,
    target: NaiveDate,
) -> Result<[f64; 24]> {
    let source = naive_source_day(target);
    history.get(&source).copied().ok_or_else(|| {
        Error::InsufficientHistory(format!(
            "naive forecast for {target} needs prices of {source}"
        ))
    })
}
