use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("simulation fault: {0}")]
    Simulation(String),

    #[error("pricing error: {0}")]
    Pricing(String),

    #[error("margin state error: {0}")]
    State(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable category used by the CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Argument(_) => "argument",
            Error::Simulation(_) => "simulation",
            Error::Pricing(_) => "pricing",
            Error::State(_) => "state",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
