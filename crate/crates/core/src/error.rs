use thiserror::Error;

pub type Result<T> = std::result::Result<T, SegError>;

#[derive(Debug, Error)]
pub enum SegError {
    #[error("non-finite value {value} at node ({i}, {j})")]
    NonFinite { i: usize, j: usize, value: f64 },

    #[error("point ({x}, {y}) is outside the discretized domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("ball of radius {radius} around ({cx}, {cy}) leaves the domain near ({x}, {y})")]
    BallOutside {
        cx: f64,
        cy: f64,
        radius: f64,
        x: f64,
        y: f64,
    },

    #[error("linear solve for component {component} stalled: residual {residual:e} after {iterations} iterations")]
    NonConvergence {
        component: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("unknown preset `{name}`; valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error("infeasible configuration: angle {angle} lies in every support")]
    Infeasible { angle: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
