//! Error types shared across the crate.

use std::path::PathBuf;

use chrono::{DateTime, Utc};

use crate::dataset::Period;

/// Errors raised while ingesting or aligning turbine time series.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("input file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("row {row}: cannot parse timestamp {value:?}")]
    MalformedTimestamp { row: usize, value: String },
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(DateTime<Utc>),
    #[error("column {0:?} not present in the CSV header")]
    MissingColumn(String),
    #[error("turbine {turbine_id}: timestamps do not lie on the {cadence_seconds} s cadence")]
    CadenceMismatch {
        turbine_id: String,
        cadence_seconds: u32,
    },
    #[error("period {0} holds no records after alignment")]
    EmptyPeriod(Period),
    #[error("series {0} has no rows")]
    EmptySeries(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors raised by the kernel regressor.
#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("design matrix needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("matrix data length {len} is not a multiple of the column count {columns}")]
    RaggedMatrix { len: usize, columns: usize },
    #[error("column {name:?} is constant; standardization undefined")]
    ConstantColumn { name: String },
    #[error("point has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("neighbor count {k} outside [1, {max}]")]
    KOutOfRange { k: usize, max: usize },
    #[error("smoother saturated at k = {k}: tr(I - M) = {trace:e}")]
    SaturatedSmoother { k: usize, trace: f64 },
    #[error("k grid is empty")]
    EmptyKGrid,
    #[error("every grid entry saturated or degenerate; no admissible k")]
    NoAdmissibleK,
    #[error("{rows} training rows but {responses} responses")]
    ResponseLengthMismatch { rows: usize, responses: usize },
}

/// Errors raised by cross-validation and the performance measures.
#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{0} Period-1 records are too few for 5-fold CV")]
    TooFewRecords(usize),
    #[error("prediction set is empty")]
    EmptyPredictionSet,
    #[error("predicted power sums to {sum:e} kW over {n} rows; BIAS denominator degenerate")]
    DegenerateDenominator { sum: f64, n: usize },
    #[error("bin widths differ: {0} vs {1}")]
    BinWidthMismatch(f64, f64),
    #[error("no covariates selected")]
    NoVariables,
    #[error("fold plan covers {plan} records, dataset has {records}")]
    FoldPlanMismatch { plan: usize, records: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Errors raised by the gain quantification stage.
#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("AEP must be positive, got {0}")]
    NonpositiveAep(f64),
    #[error("effect/offset/gain curves share no retained bin")]
    EmptyGainCurve,
    #[error("bootstrap needs at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("confidence level must lie strictly between 0 and 1, got {0}")]
    InvalidCiLevel(f64),
    #[error("only {succeeded} of {total} bootstrap replicates succeeded; need {required}")]
    BootstrapInsufficient {
        succeeded: usize,
        total: usize,
        required: usize,
    },
    #[error("power frequency line {line}: {reason}")]
    InvalidPowerFrequency { line: usize, reason: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors raised by the synthetic scenario generator.
#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}
