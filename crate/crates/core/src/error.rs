use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("overlap violated: propensity {value} for subject {index} is not in (0, 1)")]
    Overlap { index: usize, value: f64 },

    #[error("degenerate baseline: {0}")]
    DegenerateBaseline(String),

    #[error("need at least two subjects to form pairs, got {0}")]
    InsufficientPairs(usize),

    #[error("invalid coordinate {index}: {reason}")]
    InvalidCoordinate { index: usize, reason: String },

    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    #[error("non-finite loss at sweep {sweep}")]
    Divergence { sweep: usize },

    #[error("zero curvature: every active pair has identical free covariates")]
    ZeroCurvature,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("fold {fold} has {size} subjects; at least 2 are required")]
    FoldSize { fold: usize, size: usize },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bootstrap draw {draw} failed after {attempts} attempts: {source}")]
    Bootstrap {
        draw: usize,
        attempts: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
