use thiserror::Error;

use crate::label_space::Violation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("unknown vertebra label `{0}`")]
    UnknownLabel(String),
    #[error("a path needs at least one vertebra")]
    EmptyPath,
    #[error("expected {expected} gap markers, found {found}")]
    GapMarkerLength { expected: usize, found: usize },
    #[error("invalid label sequence: {}", join(.0))]
    InvalidPath(Vec<Violation>),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Failure to read a subject document.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IoError {
    #[error("parse error at `{field}`: {message}")]
    Parse { field: String, message: String },
    #[error("schema error at `{field}`: expected {expected} values, found {found}")]
    Schema {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid value at `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

impl IoError {
    pub fn field(&self) -> &str {
        match self {
            IoError::Parse { field, .. }
            | IoError::Schema { field, .. }
            | IoError::Validation { field, .. } => field,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("path has {path} vertebrae but the subject has {subject}")]
    LengthMismatch { path: usize, subject: usize },
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("cannot label an empty vertebra chain")]
    EmptyInput,
    #[error("brute-force search refuses {n} vertebrae (cap is {cap})")]
    TooLarge { n: usize, cap: usize },
    #[error("{n} vertebrae exceed the longest anatomical chain ({max})")]
    ChainTooLong { n: usize, max: usize },
    #[error("no valid label path found")]
    Internal,
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no subjects to evaluate")]
    Empty,
    #[error("subject {index}: prediction has {predicted} labels, reference has {reference}")]
    LengthMismatch {
        index: usize,
        predicted: usize,
        reference: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("window [{start}, {start}+{length}) is outside a chain of {n} vertebrae")]
    Window {
        start: usize,
        length: usize,
        n: usize,
    },
    #[error("need at least {min} vertebrae, found {n}")]
    TooShort { min: usize, n: usize },
    #[error("invalid synthetic configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("invalid sweep range: {0}")]
    Range(String),
    #[error("subject `{0}` has no reference labels")]
    MissingReference(String),
    #[error("subject `{id}`: {source}")]
    Solve { id: String, source: SolveError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}
