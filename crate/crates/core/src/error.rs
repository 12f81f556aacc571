//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the CLI to choose an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numerical => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Numerical => "numerical",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    // data
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("negative sales {value} for product `{product}` at week {week}")]
    NegativeSales {
        product: String,
        week: i64,
        value: String,
    },
    #[error("conflicting duplicate rows for product `{product}` at week {week}")]
    ConflictingDuplicate { product: String, week: i64 },
    #[error("input file has no data rows")]
    EmptyFile,
    #[error("oracle scaler value at week index {index} is not strictly positive ({value})")]
    NonPositiveOracleValue { index: usize, value: f64 },
    #[error("moving-average window {window} exceeds panel length {weeks}")]
    WindowTooLarge { window: usize, weeks: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("malformed value in row {row}, column `{column}`: {reason}")]
    Malformed {
        row: usize,
        column: String,
        reason: String,
    },

    // simulator
    #[error("weight function returned {value} (must be finite and non-negative)")]
    NegativeWeightFromPhi { value: f64 },
    #[error("invalid generative spec: {0}")]
    InvalidSpec(String),

    // neural net
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("model file: {0}")]
    ModelFormat(String),

    // concurrent layer
    #[error("week batch has no active product")]
    EmptyBatch,
    #[error("prediction {0} is not strictly positive")]
    NonPositivePrediction(f64),

    // trainer
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("training loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("every grid candidate diverged")]
    AllCandidatesDiverged,
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    // baselines / evaluation
    #[error("horizon {horizon} exceeds available history at week index {week}")]
    HorizonExceedsHistory { horizon: usize, week: usize },
    #[error("sum of actual values is zero")]
    ZeroActualTotal,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("forecast for week index {week} read data from week index {read}")]
    LookAhead { week: usize, read: usize },

    // theory
    #[error("empty covariate sample set")]
    EmptyThetaSamples,
    #[error("state pair {0} has identical states")]
    IdenticalStates(usize),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("rho must lie in [0, 1), got {0}")]
    RhoOutOfRange(f64),
    #[error("training diverged inside the risk-decay experiment (n = {n}, replica {replica})")]
    TrainingDiverged { n: usize, replica: usize },

    // plumbing
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidSpec(_) | InvalidArchitecture(_) | InvalidTrainConfig(_) | Config(_)
            | InvalidSplit(_) | WindowTooLarge { .. } | UnknownFeature(_) | InvalidDelta(_)
            | RhoOutOfRange(_) | ArchitectureMismatch(_) => ErrorClass::Config,
            DivergedLoss { .. }
            | AllCandidatesDiverged
            | TrainingDiverged { .. }
            | NonFiniteInput
            | NonPositivePrediction(_)
            | NegativeWeightFromPhi { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
