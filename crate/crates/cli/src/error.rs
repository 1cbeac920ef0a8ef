use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: clv_core::Error,
    },
    #[error("customer {id}: {source}")]
    Customer {
        id: String,
        #[source]
        source: clv_core::Error,
    },
    #[error(transparent)]
    Core(#[from] clv_core::Error),
}

impl CliError {
    /// 2 for usage problems, 1 for anything wrong with the inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::File { .. } | CliError::Customer { .. } | CliError::Core(_) => 1,
        }
    }
}

pub trait WithPath<T> {
    fn at(self, path: &Path) -> Result<T, CliError>;
}

impl<T> WithPath<T> for clv_core::Result<T> {
    fn at(self, path: &Path) -> Result<T, CliError> {
        self.map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl<T> WithPath<T> for std::io::Result<T> {
    fn at(self, path: &Path) -> Result<T, CliError> {
        self.map_err(|e| CliError::File {
            path: path.to_path_buf(),
            source: e.into(),
        })
    }
}
