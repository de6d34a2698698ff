use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("graph construction failed: {0}")]
    Construction(String),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("controller synthesis failed: {0}")]
    Synthesis(String),

    #[error("divergence at step {step}: state norm {norm:e}")]
    Divergence { step: usize, norm: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Tags the error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::Argument(_) => 2,
            Error::Synthesis(_) => 3,
            Error::Divergence { .. } => 4,
            _ => 1,
        }
    }
}
