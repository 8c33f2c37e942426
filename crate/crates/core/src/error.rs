use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("design matrix is rank deficient; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("n = {n} observations do not exceed p' = {p} parameters; screen features first")]
    NeedsScreening { n: usize, p: usize },

    #[error("marginal covariance of group {group} is singular")]
    SingularCovariance { group: usize },

    #[error("summed hessian is not positive definite")]
    NotPositiveDefinite,

    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to malformed input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::NeedsScreening { .. }
                | Error::SingularCovariance { .. }
                | Error::NotPositiveDefinite
                | Error::DegenerateCloud(_)
        )
    }

    pub(crate) fn dims(what: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch { what, expected, found }
    }
}
