use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid node count {n} for family {family}: {reason}")]
    InvalidNodeCount {
        family: String,
        n: usize,
        reason: String,
    },

    #[error("random graph not connected after {attempts} attempts")]
    ConnectivityNotAchieved { attempts: usize },

    #[error("graph must be undirected for {0}")]
    DirectedGraph(&'static str),

    #[error("graph is not connected")]
    Disconnected,

    #[error("node {0} has no in-neighbors")]
    NoInNeighbors(usize),

    #[error("node {0} has zero out-degree")]
    ZeroOutDegree(usize),

    #[error("step weight {eps} outside (0, {bound})")]
    EpsilonOutOfRange { eps: f64, bound: f64 },

    #[error("matrix is not {expected}: {detail}")]
    NotStochastic { expected: String, detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mass variable underflow at step {step}, node {node}: y = {value:e}")]
    MassUnderflow { step: usize, node: usize, value: f64 },

    #[error("{algorithm} diverged at step {step} (step size {step_size}); try a smaller step size")]
    Diverged {
        algorithm: &'static str,
        step: usize,
        step_size: f64,
    },

    #[error("objective kind {kind} not supported by {algorithm}")]
    UnsupportedObjective { kind: String, algorithm: &'static str },

    #[error("constraint sets have empty intersection")]
    EmptyIntersection,

    #[error("optimality check failed: {0}")]
    Optimality(String),

    #[error("non-finite value in state at step {0}")]
    NonFinite(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
