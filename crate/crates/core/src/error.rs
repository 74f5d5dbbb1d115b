use thiserror::Error;

/// Errors produced by the modelling, aggregation and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, found {found})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} at index {index} is outside the {family} target domain")]
    OutOfDomain {
        family: &'static str,
        index: usize,
        value: f64,
    },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("block {block}: {reason}")]
    InvalidSummary { block: usize, reason: SummaryIssue },

    #[error(
        "GLM fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})"
    )]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
        /// The last iterate, as `f64` regardless of the working scalar.
        last_beta: Vec<f64>,
    },

    #[error("{0}")]
    Dataset(String),
}

/// The specific way an aggregate summary block failed validation.
#[derive(Debug, Clone, PartialEq)]
pub enum SummaryIssue {
    NoConstraints,
    EmptyBlock,
    DuplicateRank(usize),
    RanksNotIncreasing {
        previous: usize,
        next: usize,
    },
    ValuesDecreasing {
        rank: usize,
        value: f64,
        previous: f64,
    },
    RankOutOfRange {
        rank: usize,
        block_size: usize,
    },
    ValueOutOfDomain {
        rank: usize,
        value: f64,
    },
    RowOutOfRange {
        row: usize,
        n: usize,
    },
    OverlappingRow {
        row: usize,
        other_block: usize,
    },
    DuplicateRow(usize),
}

impl std::fmt::Display for SummaryIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SummaryIssue::NoConstraints => write!(f, "block has no order-statistic constraints"),
            SummaryIssue::EmptyBlock => write!(f, "block has no rows"),
            SummaryIssue::DuplicateRank(r) => write!(f, "duplicate rank {r}"),
            SummaryIssue::RanksNotIncreasing { previous, next } => {
                write!(f, "ranks not sorted: {next} follows {previous}")
            }
            SummaryIssue::ValuesDecreasing {
                rank,
                value,
                previous,
            } => write!(
                f,
                "values decrease with rank: rank {rank} has {value} below preceding {previous}"
            ),
            SummaryIssue::RankOutOfRange { rank, block_size } => {
                write!(f, "rank {rank} outside [1, {block_size}]")
            }
            SummaryIssue::ValueOutOfDomain { rank, value } => {
                write!(f, "value {value} at rank {rank} outside the family domain")
            }
            SummaryIssue::RowOutOfRange { row, n } => {
                write!(f, "row id {row} out of range for {n} rows")
            }
            SummaryIssue::OverlappingRow { row, other_block } => {
                write!(f, "row id {row} also belongs to block {other_block}")
            }
            SummaryIssue::DuplicateRow(row) => write!(f, "row id {row} listed twice"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
