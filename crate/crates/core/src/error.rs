use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid probability space: {0}")]
    InvalidSpace(String),

    #[error("invalid type grid: {0}")]
    InvalidGrid(String),

    #[error("type {theta} lies outside [{lower}, 1]")]
    TypeOutOfRange { theta: f64, lower: f64 },

    #[error("invalid risk measure: {0}")]
    InvalidRiskMeasure(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid decision vector: {0}")]
    InvalidDecision(String),

    #[error("grid mismatch between schedules")]
    GridMismatch,

    #[error("invalid catalogue game: {0}")]
    InvalidGame(String),

    #[error("enumerated {count} catalogues for firm {firm}, cap is {cap}")]
    EnumerationCap { firm: usize, count: usize, cap: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
