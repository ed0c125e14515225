use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("ingestion error at row {row}, column '{column}': {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("series '{0}' has zero sample variance")]
    DegenerateSeries(String),

    #[error("insufficient sample: {observations} observations for {regressors} regressors per equation")]
    DegreesOfFreedom {
        observations: usize,
        regressors: usize,
    },

    #[error("rank-deficient design matrix in the equation for '{0}'")]
    RankDeficient(String),

    #[error("I - A0 is singular")]
    StructuralSingularity,

    #[error("model is not stationary: companion spectral radius {radius:.6}")]
    NonStationary { radius: f64 },

    #[error("numerical failure: {message} (residual {residual:.3e})")]
    Numerical { message: String, residual: f64 },

    #[error("variable '{0}' has zero forecast-error variance")]
    DegenerateVariance(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("misclassification: {0}")]
    Misclassification(String),

    #[error("degenerate perturbation: {0}")]
    Degeneracy(String),

    #[error("contradiction: {0}")]
    Contradiction(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
