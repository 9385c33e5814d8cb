use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is singular ({0})")]
    Singular(&'static str),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("state matrix is not Schur stable")]
    Unstable,

    #[error("degenerate polarized state: pre-normalization norm {norm:e} below threshold")]
    DegenerateState { norm: f64 },

    #[error("no convergence after {iters} iterations (last residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("contraction certificate is not available for the {0} dynamics")]
    UnsupportedCertificate(&'static str),

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("invalid probability masses: {0}")]
    Mass(String),

    #[error("angle undefined for a zero vector")]
    DegenerateAngle,

    #[error("requested {requested} samples from a population of {available}")]
    SampleSize { requested: usize, available: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("individual {index}: {source}")]
    Individual {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("iteration {iter}: {source}")]
    Iteration {
        iter: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{algorithm} trial {trial}: {source}")]
    Trial {
        algorithm: String,
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_individual(self, index: usize) -> Self {
        Error::Individual {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_iteration(self, iter: usize) -> Self {
        Error::Iteration {
            iter,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_trial(self, algorithm: &str, trial: usize) -> Self {
        Error::Trial {
            algorithm: algorithm.to_string(),
            trial,
            source: Box::new(self),
        }
    }

    /// True for errors caused by the user's configuration rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
