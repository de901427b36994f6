use thiserror::Error;

/// Failures of a CLI invocation, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fracbubble::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("selftest: {0} check(s) failed")]
    SelftestFailed(usize),
}

impl CliError {
    /// 1 selftest failure, 2 configuration or parameter, 3 numerical,
    /// 4 no root in the search window.
    pub fn exit_code(&self) -> i32 {
        use fracbubble::Error as E;
        match self {
            CliError::SelftestFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidDimension(_)
                | E::Inadmissible { .. }
                | E::InvalidParameter { .. }
                | E::EmptyConfiguration
                | E::IndexOutOfRange { .. }
                | E::EpsTooLarge(_) => 2,
                E::NoRoot(_) | E::Window { .. } => 4,
                _ => 3,
            },
            CliError::Io(_) | CliError::Csv(_) => 3,
        }
    }
}
