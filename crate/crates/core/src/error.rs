use std::fmt;

/// Errors produced by profile ingestion, validation and the scenario pipeline.
#[derive(Debug)]
pub enum Error {
    /// A CSV row could not be parsed. `line` is 1-based and counts the header.
    MalformedRow { line: u64, message: String },
    /// A column required by the schema is missing from the header.
    MissingColumn(String),
    /// A row has a different number of fields than the header.
    LengthMismatch { line: u64, expected: usize, found: usize },
    /// Timestamps are not strictly increasing with a uniform step.
    NonUniformTimestamps { line: u64 },
    /// A power or energy value is negative.
    NegativeValue { line: u64, column: String, value: f64 },
    /// A value is NaN or infinite.
    NonFinite { index: usize },
    InvalidGrid(String),
    GridMismatch,
    /// Resampling step is neither a divisor nor a multiple of the current step.
    IncompatibleStep { from_secs: i64, to_secs: i64 },
    /// Served demand exceeds predicted demand at the given sample.
    ServedExceedsDemand { index: usize },
    InvalidParameter(String),
    EmptyAxis(&'static str),
    NonIncreasingAxis(&'static str),
    /// Calibration could not satisfy the listed targets.
    Infeasible { violated: Vec<String> },
    Io(std::io::Error),
    Json(serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MalformedRow { line, message } => write!(f, "line {line}: {message}"),
            Error::MissingColumn(c) => write!(f, "missing column `{c}` in header"),
            Error::LengthMismatch { line, expected, found } => {
                write!(f, "line {line}: expected {expected} fields, found {found}")
            }
            Error::NonUniformTimestamps { line } => {
                write!(f, "line {line}: timestamps must be strictly increasing with uniform spacing")
            }
            Error::NegativeValue { line, column, value } => {
                write!(f, "line {line}: negative value {value} in column `{column}`")
            }
            Error::NonFinite { index } => write!(f, "sample {index} is not a finite number"),
            Error::InvalidGrid(m) => write!(f, "invalid time grid: {m}"),
            Error::GridMismatch => write!(f, "series are defined on different time grids"),
            Error::IncompatibleStep { from_secs, to_secs } => write!(
                f,
                "cannot resample from {from_secs} s to {to_secs} s: steps must divide evenly"
            ),
            Error::ServedExceedsDemand { index } => {
                write!(f, "served demand exceeds predicted demand at sample {index}")
            }
            Error::InvalidParameter(m) => write!(f, "invalid parameter: {m}"),
            Error::EmptyAxis(a) => write!(f, "sweep axis `{a}` is empty"),
            Error::NonIncreasingAxis(a) => write!(f, "sweep axis `{a}` must be strictly increasing"),
            Error::Infeasible { violated } => {
                write!(f, "calibration infeasible; violated targets: {}", violated.join(", "))
            }
            Error::Io(e) => write!(f, "{e}"),
            Error::Json(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
