use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write output: {0}")]
    Output(#[source] std::io::Error),

    #[error("bad input data: {0}")]
    Data(String),

    #[error("bad configuration: {0}")]
    Config(String),

    #[error("model fit failed: {0}")]
    Fit(#[source] elgof::Error),

    #[error("simulation aborted: {0}")]
    Study(#[source] elgof::Error),
}

impl CliError {
    /// Process exit status; 2 is left to argument-parsing errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 3,
            CliError::Data(_) => 4,
            CliError::Config(_) => 5,
            CliError::Fit(_) => 6,
            CliError::Study(_) => 7,
            CliError::Output(_) => 8,
        }
    }
}

impl From<elgof::Error> for CliError {
    fn from(e: elgof::Error) -> Self {
        match e {
            elgof::Error::InvalidInput(msg) => CliError::Config(msg),
            other => CliError::Fit(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
