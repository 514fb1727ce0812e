use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    /// A failure while running a command, tagged with the module it came from.
    #[error("{module}: {source}")]
    Runtime {
        module: &'static str,
        #[source]
        source: ssrgan::Error,
    },

    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime { .. } | CliError::Failed(_) => 2,
        }
    }
}

/// Tags library errors with the module that raised them.
pub trait Context<T> {
    fn during(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for ssrgan::Result<T> {
    fn during(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Runtime { module, source })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn during(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime {
            module,
            source: e.into(),
        })
    }
}
