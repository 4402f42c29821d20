use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{value} is outside the table range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("no table entry for {0}")]
    MissingKey(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("edge ({0}, {1}) has no reverse edge")]
    AsymmetricEdge(usize, usize),

    #[error("graph is not connected")]
    Disconnected,

    #[error("no connected topology after {0} attempts")]
    ConnectivityUnachievable(usize),

    #[error("no fading model for link ({0}, {1})")]
    MissingModel(usize, usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("estimates diverged in run {run} at iteration {iteration} (node {node})")]
    Divergence {
        run: usize,
        iteration: usize,
        node: usize,
    },

    #[error("invalid window {window} for a trace of {iterations} iterations")]
    Window { window: usize, iterations: usize },

    #[error("mean recursion unstable (spectral radius {0:.6})")]
    Unstable(f64),

    #[error("fixed point not reached after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
