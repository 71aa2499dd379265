use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure categories. The CLI maps these onto process exit codes with
/// [`Error::exit_code`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or configuration field failed validation.
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    /// Malformed or inconsistent configuration that is not tied to one field.
    #[error("configuration error: {0}")]
    Config(String),

    /// A formula was evaluated outside its domain of validity.
    #[error("domain error: {0}")]
    Domain(String),

    /// The width ODE drove δ to or below the collapse floor.
    #[error("width collapsed below floor {floor:e} at t = {t}")]
    Collapse { t: f64, floor: f64 },

    /// The PDE step lost norm or otherwise became unstable.
    #[error("numerical instability at t = {t}: {reason}; try a smaller dt")]
    Instability { t: f64, reason: String },

    /// The packet reached the periodic boundary.
    #[error("boundary density {density:e} at t = {t} exceeds {limit:e}; enlarge the domain")]
    Boundary { t: f64, density: f64, limit: f64 },

    /// Phase reconstruction failed (under-resolved phase or several packets).
    #[error("phase unwrap failed: {0}")]
    Unwrap(String),

    /// A requested time lies outside a precomputed series.
    #[error("time {t} outside series range [{start}, {end}]")]
    Range { t: f64, start: f64, end: f64 },

    /// Two series that must share time stamps do not.
    #[error("series misaligned: {0}")]
    Alignment(String),

    /// A validation run exceeded its tolerance.
    #[error("tolerance exceeded: {0}")]
    Tolerance(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// 2 for configuration problems, 3 for numerical failures, 4 for
    /// validation tolerance failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Validation { .. } | Error::Config(_) | Error::Domain(_) | Error::Io(_) => 2,
            Error::Collapse { .. }
            | Error::Instability { .. }
            | Error::Boundary { .. }
            | Error::Unwrap(_)
            | Error::Range { .. }
            | Error::Alignment(_) => 3,
            Error::Tolerance(_) => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
