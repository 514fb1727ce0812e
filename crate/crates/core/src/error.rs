use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    /// A loss term or gradient went non-finite.
    #[error("numerical error in {term}{}: {detail}", .iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        term: String,
        iteration: Option<usize>,
        detail: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u8, expected: u8 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("period detection failed: {0}")]
    PeriodDetection(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(term: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            term: term.into(),
            iteration: None,
            detail: detail.into(),
        }
    }

    /// Attaches an iteration index to a numerical error; other variants pass through.
    pub fn at_iteration(self, it: usize) -> Self {
        match self {
            Error::Numerical { term, detail, .. } => Error::Numerical {
                term,
                iteration: Some(it),
                detail,
            },
            other => other,
        }
    }
}
