use sensa_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    /// A stage input was produced under a different config or from
    /// different upstream files.
    #[error("stale input: {0}")]
    Stale(String),
    #[error("batch failure: {0}")]
    Batch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Stale(_) => 3,
            CliError::Batch(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Setup(_) => CliError::Config(e.to_string()),
            Error::BatchQuality { .. } => CliError::Batch(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::Setup("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::BatchQuality { failed: 3, total: 4 }).exit_code(), 4);
        assert_eq!(CliError::from(Error::Singular("x".into())).exit_code(), 3);
        assert_eq!(CliError::Stale("x".into()).exit_code(), 3);
    }
}
