use std::path::PathBuf;

use thiserror::Error;

use crate::rotation::RotationStep;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across ingestion, estimation and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("malformed cell at row {row}, column {column} ({header}): {value:?}")]
    MalformedCell {
        row: usize,
        column: usize,
        header: String,
        value: String,
    },

    #[error("malformed date {value:?} at row {row} (expected YYYYMM)")]
    MalformedDate { row: usize, value: String },

    #[error("dates are not strictly increasing at row {row} ({previous} then {current})")]
    NonMonotoneDates {
        row: usize,
        previous: String,
        current: String,
    },

    #[error("duplicate asset identifier {0:?}")]
    DuplicateAsset(String),

    #[error("ragged row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("panel has {assets} surviving assets and {periods} periods; need at least 2 of each")]
    PanelTooSmall { assets: usize, periods: usize },

    #[error("date sequences differ at position {position}: {left:?} vs {right:?}")]
    DateMismatch {
        position: usize,
        left: Option<String>,
        right: Option<String>,
    },

    #[error("invalid missing-data policy: {0}")]
    InvalidPolicy(String),

    #[error("window {window} out of range for {periods} periods")]
    WindowOutOfRange { window: usize, periods: usize },

    #[error("asset {asset:?} (column {column}) has zero variance")]
    ZeroVariance { column: usize, asset: String },

    #[error("matrix is not symmetric (max relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("symmetric eigensolver failed to converge")]
    EigenNonConvergence,

    #[error("correlation matrix has negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),

    #[error("matrix is singular or indefinite (smallest eigenvalue {smallest:e})")]
    Singular { smallest: f64 },

    #[error("vector is not unit norm (norm {norm})")]
    NotUnit { norm: f64 },

    #[error("vectors are not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("rotation precondition violated: {0}")]
    RotationPrecondition(String),

    #[error(
        "infeasible rotation pair at iteration {iteration}: T_min + T_max = {pair_sum} < 2*delta = {}",
        2.0 * delta
    )]
    InfeasiblePair {
        iteration: usize,
        pair_sum: f64,
        delta: f64,
        trace: Vec<RotationStep>,
    },

    #[error("iteration cap {cap} reached before all deviation degrees met the threshold")]
    IterationCap { cap: usize, trace: Vec<RotationStep> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unit-cost portfolio undefined: projection onto the uniform vector is {0:e}")]
    ZeroProjection(f64),

    #[error("series too short: need at least {required} observations, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series has zero standard deviation")]
    ZeroDispersion,

    #[error("estimator {0} is recognized but not implemented")]
    Unimplemented(String),

    #[error("unknown estimator label {0:?}")]
    UnknownLabel(String),
}
