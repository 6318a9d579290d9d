use alloc::string::String;

/// Errors raised by the shared domain types.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("demand series is empty")]
    EmptySeries,
    #[error("series length {len} is not a whole number of days ({per_day} periods per day)")]
    PartialDay { len: usize, per_day: usize },
    #[error("period {period} out of range (periods per day: {per_day})")]
    PeriodOutOfRange { period: usize, per_day: usize },
    #[error("granularity of {0} minutes does not divide a day")]
    BadGranularity(u32),
    #[error("invalid value {value} at index {index}: energy must be finite and non-negative")]
    BadValue { index: usize, value: f64 },
    #[error("series are not aligned: {0}")]
    Misaligned(String),
    #[error("invalid tariff: {0}")]
    InvalidTariff(String),
    #[error("invalid battery: {0}")]
    InvalidBattery(String),
}
