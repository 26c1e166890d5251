use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("frame {frame}, line {line}: {message}")]
    Parse { frame: usize, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("element `{0}` is not known")]
    UnknownElement(String),
    #[error("singular cell with periodic boundary conditions")]
    SingularCell,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0}")]
    Config(String),
    #[error("md diverged at step {step}: |F| = {force} eV/Å on atom {atom}")]
    Diverged { step: usize, atom: usize, force: f64 },
    #[error("calculator failed: {0}")]
    Calculator(String),
    #[error("interrupted after {0}")]
    Interrupted(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::InFile { .. }) => e,
            e => Error::InFile {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }
}
