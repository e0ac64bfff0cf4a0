use rndedt_core::Error;

/// Exit code for validation failures (bad manifest, bad file, bad row).
pub const EXIT_INVALID: i32 = 1;
/// Exit code for numerical failures (divergence, degenerate data).
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Error,
    },
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn context(context: impl Into<String>, source: Error) -> Self {
        CliError::Context { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        let numerical = match self {
            CliError::Context { source, .. } | CliError::Core(source) => source.is_numerical(),
            CliError::Invalid(_) => false,
            CliError::Numerical(_) => true,
        };
        if numerical {
            EXIT_NUMERICAL
        } else {
            EXIT_INVALID
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) trait Context<T> {
    fn context_with(self, f: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> Context<T> for rndedt_core::Result<T> {
    fn context_with(self, f: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError::context(f(), e))
    }
}
