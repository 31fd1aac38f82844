use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Convex weights over the two classes whose combinations (nearly) coincide,
/// proving that no separating hyperplane exists.
#[derive(Debug, Clone, PartialEq)]
pub struct HullCertificate {
    /// Sample indices and weights on the positive class (sum to one).
    pub positive: Vec<(usize, f64)>,
    /// Sample indices and weights on the negative class (sum to one).
    pub negative: Vec<(usize, f64)>,
    /// Norm of the difference of the two convex combinations.
    pub residual: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    #[error("no convergence: {what} (residual {residual:e})")]
    Numerical { what: String, residual: f64 },

    #[error("data is not linearly separable (hull residual {:e})", .0.residual)]
    NotSeparable(Box<HullCertificate>),

    #[error("margin {delta} is infeasible: acceptance rate {rate:e} over {probes} probes")]
    InfeasibleMargin {
        delta: f64,
        rate: f64,
        probes: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
