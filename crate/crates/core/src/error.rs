use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("calibration data is empty")]
    EmptyCalibration,

    #[error("invalid calibration record at row {row}: {reason}")]
    InvalidRecord { row: usize, reason: String },

    #[error("survival curve increases at index {index}")]
    NotMonotone { index: usize },

    #[error("survival value at index {index} is {value}, outside [0, 1]")]
    InvalidSurvival { index: usize, value: f64 },

    #[error("hazard at index {index} is {value}, outside [0, 1]")]
    InvalidHazard { index: usize, value: f64 },

    #[error("tail detection needs at least {needed} observed tenures, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("no exposure at or beyond tail start {tail_start}")]
    EmptyTail { tail_start: usize },

    #[error("tail start {tail_start} is beyond the last observed tenure {max_tenure}")]
    TailOutOfRange { tail_start: usize, max_tenure: usize },

    #[error("baseline hazard at tenure {tenure} is zero; cannot derive a proportionality coefficient")]
    DegenerateBaseline { tenure: usize },

    #[error("churn score {0} is outside [0, 1]")]
    InvalidScore(f64),

    #[error("proportionality coefficient {0} must be finite and non-negative")]
    InvalidAlpha(f64),

    #[error("invalid projection config: {0}")]
    InvalidConfig(String),

    #[error("margin series has {got} periods but the survival path needs {needed}")]
    MarginSeriesTooShort { needed: usize, got: usize },

    #[error("invalid rate {0}: must be finite and non-negative")]
    InvalidRate(f64),

    #[error("odds model fit diverged after {iterations} iterations (last beta {beta:?})")]
    FitDiverged { iterations: usize, beta: Vec<f64> },

    #[error("baseline hazard at tenure {tenure} is 0 or 1; the log-odds offset is undefined")]
    OffsetUndefined { tenure: usize },

    #[error("covariate vector has length {got}, expected {expected}")]
    CovariateLength { expected: usize, got: usize },

    #[error("competing-risk baselines do not share exposures at tenure {tenure}")]
    MismatchedExposures { tenure: usize },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid value in row {row}, column `{column}`: {reason}")]
    InvalidValue {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("duplicate customer id `{0}`")]
    DuplicateCustomerId(String),

    #[error("unsupported document version {0}")]
    UnsupportedVersion(u32),

    #[error("invalid baseline document: {0}")]
    InvalidBaseline(String),

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
