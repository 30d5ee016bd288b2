use std::path::PathBuf;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] vqadv::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant breach: {0}")]
    InvariantBreach(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl HarnessError {
    /// Process exit code: 2 for invariant breaches, 3 for configuration
    /// problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::InvariantBreach(_) => 2,
            HarnessError::Config(_)
            | HarnessError::Json { .. }
            | HarnessError::Core(vqadv::Error::Config(_))
            | HarnessError::Core(vqadv::Error::Capability(_)) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}
