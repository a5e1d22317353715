use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A node ended up with zero total edge weight.
    #[error("degenerate graph: node {node} has zero degree")]
    DegenerateGraph { node: usize },

    #[error(
        "conjugate gradient did not converge for column {column} after {iterations} iterations \
         (relative residual {residual:e})"
    )]
    Convergence {
        column: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate mixture fit: {0}")]
    DegenerateFit(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGraph { .. } | Error::Convergence { .. } | Error::DegenerateFit(_)
        )
    }
}
