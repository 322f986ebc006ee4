//! Thermal-palette band counting, hot-fraction series and the flashover detector.

mod band;
mod detect;
mod report;
mod series;

pub use band::{
    classify_pixel, count_bands, hot_fraction, Band, BandCounts, ChannelMass, CountMode,
    BACKGROUND_FLOOR,
};
pub use detect::{
    detect, detect_fractions, evaluate, FlashoverAlert, FlashoverMonitor, PredictorConfig,
};
pub use report::{
    format_g6, parse_report, report_fractions, write_report, AlertReport, ReportRow, REPORT_HEADER,
};
pub use series::{rate, smooth, BandSeries};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("hot fraction is undefined for a frame with no classified pixels")]
    UndefinedFraction,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("series needs at least {needed} samples, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("timestamps must strictly increase: sample {index} has t={found} after t={previous}")]
    NonIncreasingTime {
        index: usize,
        previous: f64,
        found: f64,
    },
    #[error("invalid series: {0}")]
    Series(String),
    #[error("report line {line}: {message}")]
    Parse { line: usize, message: String },
}
