use thiserror::Error;

/// Errors raised by the tempered transport kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("temperature t = {0} outside the supported range [0, 2)")]
    Temperature(f64),

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("infeasible support: {axis} {index} has no admissible mass")]
    InfeasibleSupport { axis: Axis, index: usize },

    #[error("size guard: {op} accepts n <= {limit}, got n = {n}")]
    SizeGuard { op: &'static str, limit: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{op} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        op: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate baseline: reference objective is {0}")]
    DegenerateBaseline(f64),

    #[error("serialization: {0}")]
    Serde(String),
}

/// Row or column of a matrix, used to locate support defects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Row,
    Column,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Row => f.write_str("row"),
            Axis::Column => f.write_str("column"),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        op,
        detail: detail.into(),
    }
}
