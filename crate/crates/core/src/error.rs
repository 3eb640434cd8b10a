use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver error (well {well}): {reason}")]
    Solver { well: usize, reason: String },

    #[error("integration error: {reason} (max |detuning|*dt = {max_phase_step:.3e})")]
    Integration { reason: String, max_phase_step: f64 },

    #[error("calibration error: {reason}")]
    Calibration { reason: String, trace: Vec<(f64, f64)> },

    #[error("missing calibration for {0}")]
    CalibrationMissing(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Domain(_) => 2,
            Error::Calibration { .. } | Error::CalibrationMissing(_) => 3,
            Error::Solver { .. } | Error::Integration { .. } => 4,
            Error::Io(_) => 1,
        }
    }
}
