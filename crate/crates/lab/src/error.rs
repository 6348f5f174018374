use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// Schema or semantic violation; `pointer` is a JSON pointer into the
    /// config document.
    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: cavity_spectra::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { pointer: pointer.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// 1 for config problems, 2 for everything that failed while computing
    /// or writing results.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 1,
            Self::Numerical { .. } | Self::Io { .. } => 2,
        }
    }
}

pub type LabResult<T> = Result<T, LabError>;

/// Attaches an experiment context to core errors.
pub trait Context<T> {
    fn context(self, what: &str) -> LabResult<T>;
}

impl<T> Context<T> for cavity_spectra::Result<T> {
    fn context(self, what: &str) -> LabResult<T> {
        self.map_err(|source| LabError::Numerical { context: what.to_string(), source })
    }
}
