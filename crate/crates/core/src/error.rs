use thiserror::Error;

/// Errors surfaced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("empty training data for {what}")]
    EmptyTraining { what: &'static str },

    #[error("oracle cell ({v11},{v12},{v13},{v2}) has zero occupancy; increase replicates")]
    ZeroCellOccupancy { v11: u8, v12: u8, v13: u8, v2: u8 },

    #[error("fold count {j} exceeds sample size {n}")]
    TooManyFolds { j: usize, n: usize },

    #[error("fold {fold}, arm {arm}: no training records with Y=1 and S=1")]
    EmptyBSubset { fold: usize, arm: u8 },

    #[error(
        "coordinate descent did not converge after {sweeps} sweeps \
         (last objective change {last_delta:.3e})"
    )]
    NonConvergence { sweeps: usize, last_delta: f64 },

    #[error("nuisance value {value} for record {record} fell below the clip bound")]
    BelowClip { record: usize, value: f64 },

    #[error("model has no surface for v2 level {level}")]
    MissingV2Level { level: u8 },

    #[error("no decisions to summarize")]
    EmptyDecisions,

    #[error("positivity violation: rule assigns arm 1 to records never eligible for it ({0} records, first at index {1})")]
    PositivityViolation(usize, usize),

    #[error("replication run invalid: {failed} of {total} replicates failed (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("line {line}: {msg}")]
    CsvFormat { line: usize, msg: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
