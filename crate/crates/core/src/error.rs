use std::fmt;

use thiserror::Error;

/// A violated parameter invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub field: String,
    pub reason: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid {}: {}", self.field, self.reason)
    }
}

impl std::error::Error for ValidationError {}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Validation(#[from] ValidationError),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("norm drift of {drift:.3e} in a single step at t = {t}")]
    NormDrift { t: f64, drift: f64 },

    #[error(
        "wave history would need {snapshots} snapshots ({bytes} bytes); raise snapshot_stride"
    )]
    OutOfMemory { snapshots: usize, bytes: u128 },

    #[error("velocity undefined near a wavefunction node at ({x}, {z}), t = {t}")]
    NodeEncounter { x: f64, z: f64, t: f64 },

    #[error("point ({x}, {z}) lies outside the grid")]
    OutsideGrid { x: f64, z: f64 },

    #[error("time {t} outside the stored history [{t_start}, {t_end}]")]
    OutsideHistory { t: f64, t_start: f64, t_end: f64 },

    #[error("histogram and flux profile use different bin edges")]
    BinMismatch,

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed history file: {0}")]
    HistoryFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
