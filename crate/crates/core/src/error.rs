use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("set is empty: {0}")]
    Empty(String),

    #[error("unbounded: {0}")]
    Unbounded(String),

    #[error("shape matrix is singular or ill-conditioned (condition number {cond:.3e})")]
    SingularShape { cond: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("pair (A, B) is not stabilizable: {0}")]
    Unstabilizable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("scaling failed: {0}")]
    Scaling(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with the pipeline stage it came from.
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, stripping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
