use std::path::PathBuf;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Override(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: wbc_core::Error,
    },
}

impl CliError {
    /// Short machine-readable category for the one-line error report.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } | CliError::Override(_) => "config",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Image { .. } => "image",
            CliError::Io { .. } => "io",
            CliError::Core { source, .. } => match source {
                wbc_core::Error::MalformedRow { .. }
                | wbc_core::Error::LabelRange { .. }
                | wbc_core::Error::NonNumericCell { .. }
                | wbc_core::Error::PixelRange { .. }
                | wbc_core::Error::Csv(_) => "data",
                wbc_core::Error::NonFiniteLoss { .. } => "divergence",
                wbc_core::Error::Geometry(_) | wbc_core::Error::ShapeMismatch(_) => "geometry",
                wbc_core::Error::Io(_) => "io",
                _ => "pipeline",
            },
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for wbc_core::Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Core {
            context: context(),
            source,
        })
    }
}
