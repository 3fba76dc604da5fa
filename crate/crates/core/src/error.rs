use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("unknown synset `{0}`")]
    UnknownSynset(String),

    #[error("unknown relation `{name}`; supported relations: {}", supported.join(", "))]
    UnknownRelation {
        name: String,
        supported: Vec<String>,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{} key(s) have no vector: {}", .0.len(), preview(.0))]
    MissingKeys(Vec<String>),

    #[error("normal matrix is singular (rank deficient anchors); retry with a ridge penalty > 0")]
    Singular,

    #[error("only {found} anchors qualify but the source space has {dim} dimensions; lower the occurrence threshold or use a ridge penalty")]
    TooFewAnchors { found: usize, dim: usize },

    #[error("invalid query: {0}")]
    Query(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}

fn preview(keys: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut s = keys.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if keys.len() > SHOWN {
        s.push_str(&format!(", ... ({} more)", keys.len() - SHOWN));
    }
    s
}
