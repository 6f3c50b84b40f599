use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("point {id} has non-positive or non-finite weight {weight}")]
    NonPositiveWeight { id: u64, weight: f64 },

    #[error("distance matrix is not symmetric at ({a}, {b}): {dab} vs {dba}")]
    Asymmetric { a: u64, b: u64, dab: f64, dba: f64 },

    #[error("triangle inequality violated on ({a}, {b}, {c}) by {excess:e}")]
    TriangleViolation { a: u64, b: u64, c: u64, excess: f64 },

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("space is disconnected: no path between point {a} and point {b}")]
    Disconnected { a: u64, b: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("function has {got} values but the space has {expected} points")]
    LengthMismatch { expected: usize, got: usize },

    #[error("ball is empty")]
    EmptyBall,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error(
        "generation window is empty after resolution clipping (requested {lo}:{hi}, admissible {adm_lo}:{adm_hi})"
    )]
    EmptyWindow { lo: i32, hi: i32, adm_lo: i32, adm_hi: i32 },

    #[error("curve is invalid: {0}")]
    InvalidCurve(String),

    #[error("terminal set is empty")]
    EmptyTerminals,

    #[error("hop limit must be positive")]
    ZeroHopLimit,

    #[error("space carries no edges; an adjacency structure is required")]
    NoEdges,

    #[error("edge ({a}, {b}) has zero length")]
    ZeroLengthEdge { a: u64, b: u64 },

    #[error("terminal sets are not connected")]
    DisconnectedTerminals,

    #[error("q = {q} must be strictly less than p = {p}")]
    ExponentOrder { q: f64, p: f64 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
