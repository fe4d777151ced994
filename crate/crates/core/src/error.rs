//! Error type shared by all solver and I/O paths.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field violates its invariant.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// The tile quotas cannot be met: more tiles are required than exist.
    #[error("infeasible quotas: users require {required} tiles but only {available} exist")]
    InfeasibleQuota { required: usize, available: usize },

    /// Matrix/vector dimensions do not agree with the scenario.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An index addressed a user or tile outside the scenario.
    #[error("{kind} index {index} out of range (< {bound} required)")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        bound: usize,
    },

    /// Phase optimization was asked for a tile that no user owns.
    #[error("tile {tile} has no associated user; phase update requires full association")]
    UnassociatedTile { tile: usize },

    /// A user has no usable channel gain at all.
    #[error("user {user} has zero direct and reflected gains; association score undefined")]
    ZeroGain { user: usize },

    /// Exhaustive enumeration would exceed the configured cap.
    #[error("exhaustive search refused: K^I = {combinations} exceeds cap {cap} (complexity O(K^I))")]
    ExhaustiveCapExceeded { combinations: f64, cap: f64 },

    /// The damped normal equations could not be solved even at maximal damping.
    #[error("training aborted: {0}")]
    TrainingFailed(String),

    /// A file had the wrong shape or could not be parsed.
    #[error("malformed {what}: {reason}")]
    MalformedFile { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
