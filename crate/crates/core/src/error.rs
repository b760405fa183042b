use thiserror::Error;

/// Errors raised by the estimators, the simulation harness and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("quantile of order {p} is unreachable: the estimated CDF plateaus at {max_value}")]
    UnreachableQuantile { p: f64, max_value: f64 },

    #[error("censoring survival is zero just before event time {time}; IPCW weight undefined")]
    DegenerateWeight { time: f64 },

    #[error("bandwidth selection failed: {0}")]
    SelectionFailure(String),

    #[error("censoring calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: u64,
        column: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, printed by the CLI alongside the message.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "E_INVALID_INPUT",
            Error::InvalidConfig(_) => "E_INVALID_CONFIG",
            Error::UnreachableQuantile { .. } => "E_UNREACHABLE_QUANTILE",
            Error::DegenerateWeight { .. } => "E_DEGENERATE_WEIGHT",
            Error::SelectionFailure(_) => "E_SELECTION_FAILURE",
            Error::CalibrationFailure(_) => "E_CALIBRATION_FAILURE",
            Error::Parse { .. } => "E_PARSE",
            Error::Io(_) => "E_IO",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
