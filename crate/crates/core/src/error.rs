use thiserror::Error;

/// Errors produced by the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("quadrature did not converge on [{a}, {b}] (estimate {estimate:e}, tolerance {tol:e}){context}")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        tol: f64,
        context: String,
    },

    #[error("matrix is numerically singular (ratio {ratio:e})")]
    Singular { ratio: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics (non-convergence, singularity),
    /// false for invalid input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Quadrature { .. } | Error::Singular { .. } | Error::Numerical(_) => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// Wraps the error with a description of the failing stage.
    pub fn at(self, stage: impl Into<String>) -> Self {
        Error::Context {
            context: stage.into(),
            source: Box::new(self),
        }
    }

    /// Attaches a location description to quadrature failures.
    pub(crate) fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::Quadrature {
                a,
                b,
                estimate,
                tol,
                context,
            } => Error::Quadrature {
                a,
                b,
                estimate,
                tol,
                context: format!("{context} [{}]", ctx.into()),
            },
            other => other,
        }
    }
}
