use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented invariant (bad parameters, malformed branch set, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("phase {phi} outside tabulated range [{min}, {max}]")]
    OutOfDomain { phi: f64, min: f64, max: f64 },

    /// The least-squares design matrix is rank deficient.
    #[error("degenerate basis: column {column} is linearly dependent on {colliding:?}")]
    DegenerateBasis {
        column: String,
        colliding: Vec<String>,
    },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("spectrum did not converge to {tol:e} GHz by k_max = {k_max} (last change {last_change:e} GHz)")]
    Truncation {
        k_max: usize,
        tol: f64,
        last_change: f64,
    },

    #[error("need at least {needed} eigenvalues, have {have}")]
    NotEnoughLevels { needed: usize, have: usize },

    #[error("nothing to scan: {0}")]
    NothingToScan(String),

    #[error("solver failed at grid node ({i1}, {i2}): {source}")]
    AtNode {
        i1: usize,
        i2: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures that originate in an eigensolve rather than in the inputs.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonHermitian { .. }
                | Error::Truncation { .. }
                | Error::NotEnoughLevels { .. }
                | Error::AtNode { .. }
        )
    }
}
