//! Crate-wide error type.

use thiserror::Error;

/// Failure classes of the library and the experiment harness.
///
/// Each variant maps to a distinct process exit code (see [`Error::exit_code`])
/// so scripted callers can tell failure classes apart.
#[derive(Debug, Error)]
pub enum Error {
    /// A text input (signal file or config file) could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An experiment configuration is inconsistent or names unknown keys.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Lengths or grid sizes do not match.
    #[error("size error: {0}")]
    Size(String),

    /// A requested feature is out of the supported range.
    #[error("unsupported: {0}")]
    Capability(String),

    /// An iteration hit its cap before reaching the requested tolerance.
    #[error("no convergence: {0}")]
    Convergence(String),

    /// Non-finite samples appeared at the given step or inner iteration.
    #[error("divergence at step {step}: non-finite samples")]
    Divergence { step: usize },

    /// A linear system could not be solved.
    #[error("singular system: {0}")]
    Singular(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Distinct nonzero exit code per failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 2,
            Error::Config(_) => 3,
            Error::Parameter(_) => 4,
            Error::Size(_) => 5,
            Error::Capability(_) => 6,
            Error::Convergence(_) => 7,
            Error::Divergence { .. } => 8,
            Error::Singular(_) => 9,
            Error::Io(_) => 10,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
