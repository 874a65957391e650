use thiserror::Error;

/// Failures of the command-line runner, each tied to an exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("run failed: {0}")]
    Run(msaccel::Error),

    #[error("audit failed: {0}")]
    Audit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;
pub const EXIT_AUDIT: i32 = 5;

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => EXIT_CONFIG,
            HarnessError::Parse(_) => EXIT_PARSE,
            HarnessError::Run(msaccel::Error::Divergence { .. }) => EXIT_DIVERGENCE,
            HarnessError::Run(_) | HarnessError::Io(_) => EXIT_OTHER,
            HarnessError::Audit(_) => EXIT_AUDIT,
        }
    }

    /// Maps an error raised while building the objective.
    pub(crate) fn setup(e: msaccel::Error) -> Self {
        match e {
            msaccel::Error::Parse { .. } => HarnessError::Parse(e.to_string()),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
