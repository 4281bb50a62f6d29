use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WendyError {
    #[error("unknown model `{name}`; valid models: {valid}")]
    UnknownModel { name: String, valid: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite feature value at row {row}, feature {feature}")]
    FeatureEvaluation { row: usize, feature: usize },

    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid model for this noise kind: {0}")]
    InvalidModel(String),

    #[error("noise ratio undefined: data have zero RMS norm")]
    UndefinedRatio,

    #[error("design matrix G is rank deficient (rank {rank} < {cols}); smallest singular values: {smallest:?}")]
    RankDeficient { rank: usize, cols: usize, smallest: Vec<f64> },

    #[error("residual covariance is numerically singular at IRLS iteration {iteration}")]
    SingularCovariance { iteration: usize },

    #[error("parameter covariance is not positive semidefinite (smallest eigenvalue {smallest_eigenvalue})")]
    CovarianceFactorization { smallest_eigenvalue: f64 },

    #[error("data grid has {points} points but the variance filter needs {needed}")]
    GridTooShort { points: usize, needed: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl WendyError {
    /// Short machine-readable tag, used for failure accounting in experiment output.
    pub fn kind(&self) -> &'static str {
        match self {
            WendyError::UnknownModel { .. } => "unknown_model",
            WendyError::Dimension(_) => "dimension",
            WendyError::FeatureEvaluation { .. } => "feature_evaluation",
            WendyError::Divergence { .. } => "divergence",
            WendyError::Config(_) => "config",
            WendyError::InvalidModel(_) => "invalid_model",
            WendyError::UndefinedRatio => "undefined_ratio",
            WendyError::RankDeficient { .. } => "rank_deficient",
            WendyError::SingularCovariance { .. } => "singular_covariance",
            WendyError::CovarianceFactorization { .. } => "covariance_factorization",
            WendyError::GridTooShort { .. } => "grid_too_short",
            WendyError::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for WendyError {
    fn from(e: std::io::Error) -> Self {
        WendyError::Io(e.to_string())
    }
}

impl From<csv::Error> for WendyError {
    fn from(e: csv::Error) -> Self {
        WendyError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, WendyError>;
