use thiserror::Error;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    VerifyFailed = 1,
    BadFlags = 2,
    ModelError = 3,
    ReduceRefused = 4,
    NotConverged = 5,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Flags(String),
    #[error(transparent)]
    Model(#[from] infogeo::models::ModelError),
    #[error("{0}")]
    Compute(String),
    #[error("writing {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit(&self) -> Exit {
        match self {
            CliError::Flags(_) | CliError::Output { .. } => Exit::BadFlags,
            CliError::Model(_) | CliError::Compute(_) => Exit::ModelError,
        }
    }

    pub fn compute(e: impl std::fmt::Display) -> Self {
        CliError::Compute(e.to_string())
    }
}
