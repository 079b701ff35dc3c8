use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("singular tridiagonal system: pivot {pivot:e} at row {row}")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("singular matrix in dense elimination at column {column}")]
    SingularMatrix { column: usize },

    /// |g(t_k)| fell below the floor; the reconstruction divides by g.
    #[error("assumption A3 violated at level {level} (t = {t}): |g| = {g:e} is below the floor {floor:e}")]
    ObservationTooSmall {
        level: usize,
        t: f64,
        g: f64,
        floor: f64,
    },

    #[error("inner coefficient iteration did not converge at level {level} after {iterations} solves (residual {residual:e})")]
    NonConvergent {
        level: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("problem `{0}` has no exact {1}")]
    MissingExact(String, &'static str),

    #[error("problem data failed compatibility checks: {0}")]
    Incompatible(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
