use ccyield_core::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Error,
    },

    #[error("no feasible design: {0}")]
    Infeasible(String),

    #[error("compare: {0}")]
    Compare(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Compare(_) => 2,
            CliError::Stage { source, .. } => match source {
                Error::Simulation { .. }
                | Error::NonFiniteOutput { .. }
                | Error::Protocol(_)
                | Error::Metric(_) => 3,
                _ => 1,
            },
            CliError::Infeasible(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

/// Tags a core error with the pipeline stage that raised it.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for ccyield_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
