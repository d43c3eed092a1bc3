use thiserror::Error;

/// Exit statuses: 0 success, 1 runtime failure, 2 invalid input or
/// configuration, 3 convergence gate failed under `--strict`.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] nowcast_core::Error),

    #[error("convergence gate failed: MPSRF {0:.4} is not below 1.05")]
    NotConverged(f64),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use nowcast_core::Error as E;
        match self {
            CliError::Invalid(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Core(E::Numerical(_) | E::Initialization(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}
