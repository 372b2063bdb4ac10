use glnn::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 1 configuration, 2 I/O and file format, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                Error::Config(_) | Error::Dimension { .. } => 1,
                Error::Io { .. } | Error::Malformed { .. } | Error::Version { .. } | Error::Consistency(_) => 2,
                Error::NumericOverflow(_)
                | Error::SingularMassMatrix { .. }
                | Error::NonFiniteGradient { .. }
                | Error::NonFiniteLoss { .. }
                | Error::Divergence { .. } => 3,
            },
        }
    }
}
