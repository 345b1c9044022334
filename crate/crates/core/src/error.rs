//! Engine error type shared by every analysis module.

use thiserror::Error;

/// Broad class of an engine error, used by front-ends to pick a status code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The request itself is malformed: bad names, bad rules, bad input text.
    Validation,
    /// A referenced entity does not exist.
    NotFound,
    /// The request is valid but needs state that does not exist yet.
    Conflict,
    /// The request is well-formed but the data cannot support the analysis.
    Degenerate,
}

impl ErrorClass {
    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Validation => "validation",
            ErrorClass::NotFound => "not_found",
            ErrorClass::Conflict => "conflict",
            ErrorClass::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("dataset has no data rows")]
    EmptyDataset,

    #[error("column `{0}` has no non-missing values")]
    AllMissing(String),

    #[error("column `{0}` has a single level and cannot be encoded")]
    DegenerateEncoding(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("selection contains no usable rows")]
    EmptySelection,

    #[error("need at least {needed} rows, got {got}")]
    SampleSize { needed: usize, got: usize },

    #[error(
        "design matrix is rank deficient: column `{column}` is collinear with earlier columns"
    )]
    Collinearity { column: String },

    #[error("outcome has a single class; logistic fit is undefined")]
    Separation,

    #[error("correlation undefined for constant input")]
    UndefinedCorrelation,

    #[error("AUC undefined: labels contain a single class")]
    DegenerateAuc,

    #[error("bootstrap failed: statistic defined on {successes} of {attempts} resamples")]
    BootstrapFailure { attempts: usize, successes: usize },

    #[error("scoring `{covariate}` failed in the {fit} fit: {source}")]
    Scoring {
        covariate: String,
        fit: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("every candidate covariate failed to score")]
    EmptyRanking,

    #[error("degenerate treatment split: {0}")]
    DegenerateSplit(String),

    #[error("treatment arms too small: {treated} treated, {untreated} untreated (need 2 each)")]
    ArmSize { treated: usize, untreated: usize },

    #[error("imbalance report has no defined entries")]
    EmptyReport,

    #[error("invalid partition rule: {0}")]
    Rule(String),

    #[error("partition has no non-empty cells")]
    EmptyPartition,

    #[error("invalid tree configuration: {0}")]
    TreeConfig(String),

    #[error("no admissible split: tree would have a single leaf")]
    SingleLeaf,

    #[error("cause is constant; binning yields a single bin")]
    SingleBin,

    #[error("storyboard scope contains no complete rows")]
    EmptyDiagram,

    #[error("unknown subgroup {0}")]
    UnknownSubgroup(usize),

    #[error("no partition has been built yet")]
    PartitionRequired,
}

impl Error {
    /// Stable machine-readable name, surfaced in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse_error",
            Error::DuplicateColumn(_) => "schema_error",
            Error::EmptyDataset => "empty_dataset",
            Error::AllMissing(_) => "inference_error",
            Error::DegenerateEncoding(_) => "degenerate_encoding",
            Error::UnknownColumn(_) => "unknown_column",
            Error::Config(_) => "invalid_config",
            Error::EmptySelection => "empty_selection",
            Error::SampleSize { .. } => "sample_size",
            Error::Collinearity { .. } => "collinearity",
            Error::Separation => "separation",
            Error::UndefinedCorrelation => "undefined_correlation",
            Error::DegenerateAuc => "degenerate_auc",
            Error::BootstrapFailure { .. } => "bootstrap_failure",
            Error::Scoring { .. } => "scoring_error",
            Error::EmptyRanking => "empty_ranking",
            Error::DegenerateSplit(_) => "degenerate_split",
            Error::ArmSize { .. } => "arm_size",
            Error::EmptyReport => "empty_report",
            Error::Rule(_) => "rule_error",
            Error::EmptyPartition => "empty_partition",
            Error::TreeConfig(_) => "tree_config",
            Error::SingleLeaf => "single_leaf",
            Error::SingleBin => "single_bin",
            Error::EmptyDiagram => "empty_diagram",
            Error::UnknownSubgroup(_) => "unknown_subgroup",
            Error::PartitionRequired => "partition_required",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. }
            | Error::DuplicateColumn(_)
            | Error::EmptyDataset
            | Error::UnknownColumn(_)
            | Error::Config(_)
            | Error::Rule(_)
            | Error::TreeConfig(_) => ErrorClass::Validation,
            Error::UnknownSubgroup(_) => ErrorClass::NotFound,
            Error::PartitionRequired => ErrorClass::Conflict,
            _ => ErrorClass::Degenerate,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Serializable record of a failure, embedded in payloads in place of a result.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Failure {
    pub error_code: String,
    pub message: String,
}

impl From<&Error> for Failure {
    fn from(err: &Error) -> Self {
        Failure {
            error_code: err.code().to_string(),
            message: err.to_string(),
        }
    }
}

/// Error body returned by every front-end: HTTP 4xx responses and CLI
/// failures carry the same three fields.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub error_code: String,
    pub message: String,
    pub detail: serde_json::Value,
}

impl ErrorBody {
    pub fn new(
        error_code: impl Into<String>,
        message: impl Into<String>,
        detail: serde_json::Value,
    ) -> ErrorBody {
        ErrorBody {
            error_code: error_code.into(),
            message: message.into(),
            detail,
        }
    }
}

impl From<&Error> for ErrorBody {
    fn from(err: &Error) -> Self {
        let mut detail = serde_json::json!({ "class": err.class().name() });
        if let Error::Scoring {
            covariate,
            fit,
            source,
        } = err
        {
            detail["covariate"] = covariate.as_str().into();
            detail["fit"] = (*fit).into();
            detail["cause"] = source.code().into();
        }
        ErrorBody::new(err.code(), err.to_string(), detail)
    }
}
