use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: line {line}: {msg}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("count overflow while merging '{0}'")]
    CountOverflow(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("power-law fit needs at least 2 bins in range, found {0}")]
    InsufficientPoints(usize),

    #[error("degenerate power-law fit: all frequencies equal")]
    DegenerateFit,

    #[error("power-law fit has no fr (alpha must be positive)")]
    MissingFr,

    #[error("language models have different orders ({0} vs {1})")]
    OrderMismatch(usize, usize),

    #[error("token budget {budget} is smaller than one sentence")]
    BudgetTooSmall { budget: u64 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage '{stage}' failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
