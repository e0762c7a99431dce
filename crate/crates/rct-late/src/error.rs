//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// The design matrix has (near-)collinear columns; the normal equations
    /// cannot be factored within the pivot tolerance.
    #[error("design matrix is rank deficient (collinear or constant columns)")]
    RankDeficient,

    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The estimated compliance effect is (numerically) zero, so the LATE
    /// ratio is undefined.
    #[error("compliance effect estimate is zero; the LATE ratio is undefined")]
    ZeroComplianceEffect,

    /// A treatment or control arm is empty where both are required.
    #[error("degenerate design: an assignment arm is empty")]
    DegenerateArm,

    /// A variance denominator is not positive after degrees-of-freedom
    /// corrections.
    #[error("insufficient degrees of freedom for variance estimation")]
    InsufficientDf,

    /// Exhaustive enumeration would exceed the configured guard.
    #[error("enumeration of {combinations} assignments exceeds the guard of {limit}")]
    TooLarge { combinations: u128, limit: u128 },

    /// Units inside one cluster carry different treatment assignments.
    #[error("cluster {0:?} mixes treatment assignments")]
    MixedAssignmentInCluster(String),

    /// The weight column varies inside a cluster.
    #[error("cluster {0:?} has a non-constant weight column")]
    InconsistentWeightColumn(String),

    /// A mapped column is absent from the input file.
    #[error("column {0:?} not found in the data file")]
    MissingColumn(String),

    /// A value in a binary column is neither 0 nor 1.
    #[error("row {row}: column {column:?} must be 0 or 1, got {value:?}")]
    NonBinaryValue {
        row: usize,
        column: String,
        value: String,
    },

    /// A mapped column has an empty cell.
    #[error("row {row}: column {column:?} is missing a value")]
    MissingValue { row: usize, column: String },

    /// A numeric cell did not parse to a finite number.
    #[error("row {row}: column {column:?} is not a finite number: {value:?}")]
    NonFiniteValue {
        row: usize,
        column: String,
        value: String,
    },

    /// A cell parsed but violates a column constraint (e.g. nonpositive weight).
    #[error("row {row}: column {column:?}: {message}")]
    InvalidValue {
        row: usize,
        column: String,
        message: String,
    },

    /// The assignment column leaves one arm empty.
    #[error("the assignment column leaves an arm empty")]
    EmptyArm,

    /// Every block was dropped by the block policy; nothing remains to pool.
    #[error("all blocks were dropped; nothing to pool")]
    AllBlocksDropped,

    /// A configuration file is invalid for the requested run.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for data/validation problems,
    /// 3 for numerical problems. Usage errors (exit 1) never reach here.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankDeficient
            | Error::Domain(_)
            | Error::ZeroComplianceEffect
            | Error::DegenerateArm
            | Error::InsufficientDf
            | Error::TooLarge { .. }
            | Error::AllBlocksDropped => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
