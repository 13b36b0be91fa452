use chrono::NaiveDate;
use thiserror::Error;

use crate::units::{Price, Volume};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bid at {price} has price outside [{p_min}, {p_max}]")]
    PriceOutOfBounds { price: f64, p_min: f64, p_max: f64 },

    #[error("bid at {price} has negative volume {volume}")]
    NegativeVolume { price: f64, volume: f64 },

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("transformed supply curve decreases at price tick {0:?}")]
    NonMonotoneTransform(Price),

    #[error("no equilibrium: supply never reaches demand within the price bounds")]
    NoEquilibrium,

    #[error("volume {volume:?} at price tick {price:?} lies above the last class bound")]
    VolumeAboveLastBound { price: Price, volume: Volume },

    #[error("volume step too large: only {classes} price class(es) derived, at least 2 required")]
    TooFewClasses { classes: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("missing hours: {}", format_gaps(.0))]
    MissingHours(Vec<(NaiveDate, u8)>),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("coverage gap at {day} hour {hour}, column {column}")]
    CoverageGap {
        day: NaiveDate,
        hour: u8,
        column: String,
    },

    #[error("window has {rows} days, at least {required} required")]
    WindowTooShort { rows: usize, required: usize },

    #[error("coordinate descent did not converge at lambda {lambda} after {iterations} sweeps")]
    NoConvergence { lambda: f64, iterations: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: String, hint: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_gaps(gaps: &[(NaiveDate, u8)]) -> String {
    gaps.iter()
        .map(|(d, h)| format!("{d} h{h}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    /// Whether the error stems from a numerical failure rather than bad data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::NoEquilibrium | Error::NonMonotoneTransform(_)
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidParameter(_))
    }
}
