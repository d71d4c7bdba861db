use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point ({x:.3}, {y:.3}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("too many features for exact enumeration ({features} > {limit}); use sampled_shapley")]
    TooManyFeatures { features: usize, limit: usize },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("candidate {candidate}: {source}")]
    Candidate {
        candidate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("search budget exhausted after {nodes} nodes (incumbent {incumbent:.6}, bound {bound:.6})")]
    BudgetExceeded {
        nodes: u64,
        incumbent: f64,
        bound: f64,
        best_selection: Vec<usize>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
