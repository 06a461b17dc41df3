//! Library surface of the command-line front end: configuration, CSV
//! ingestion/emission, artifact writers, and the command implementations.
//! The `mdlm` binary is a thin argument-parsing wrapper over these.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod output;

/// Command-level errors carrying the exit-code contract:
/// 1 I/O, 2 validation, 3 convergence gate, 4 numeric failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("validation failure: {0}")]
    Validation(String),
    #[error("convergence gate: {0}")]
    Convergence(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl From<mdlm::Error> for CliError {
    fn from(err: mdlm::Error) -> Self {
        fn is_numeric(err: &mdlm::Error) -> bool {
            match err {
                mdlm::Error::NumericallySingular | mdlm::Error::CannotInitialize { .. } => true,
                mdlm::Error::Record { source, .. } => is_numeric(source),
                _ => false,
            }
        }
        if is_numeric(&err) {
            CliError::Numeric(err.to_string())
        } else {
            CliError::Validation(err.to_string())
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}
