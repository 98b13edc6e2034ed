//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A CSV record failed validation. `line` is 1-based and counts the
    /// header, matching what a user sees in their editor.
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: u64, reason: String },

    #[error("invalid phase configuration: {0}")]
    InvalidConfig(String),

    #[error("event month {month} outside observation window of {total_months} months")]
    MonthOutOfRange { month: u32, total_months: u32 },

    #[error("{{{u}, {v}}} is not an edge of the graph")]
    NotAnEdge { u: u32, v: u32 },

    #[error("phase index {phase} out of range (network has {num_phases} phases)")]
    PhaseOutOfRange { phase: usize, num_phases: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No tie was present at the requested baseline phase.
    #[error("no ties present at baseline phase {0}")]
    EmptyBaseline(usize),

    /// Every candidate of the node has zero duration at the target phase,
    /// so the investment target is undefined.
    #[error("node {node} is silent toward all its candidates at phase {phase}")]
    SilentNode { node: u32, phase: usize },

    /// Training loss became non-finite; the payload is the last finite epoch.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
