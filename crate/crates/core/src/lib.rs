//! Anatomically constrained vertebra labelling with enumeration anomalies.
//!
//! A chain of detected vertebrae comes with four classifier heads per
//! vertebra (label, region, transition, visibility). [`solve`] finds the
//! minimum-cost label sequence that respects spinal anatomy, including
//! eleven or thirteen thoracic and four or six lumbar vertebrae.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod classifier_io;
pub mod cost_model;
pub mod error;
pub mod label_space;
pub mod metrics;
pub mod scalar;
pub mod solver;
pub mod sweep;
pub mod synthgen;

pub use classifier_io::{
    normalize_outputs, parse_subject, subject_to_json, NormConfig, NormalizedOutputs,
    SubjectRecord, VertebraScores,
};
pub use cost_model::{build_label_cost, pathcost, CostMatrix, SolverConfig};
pub use error::{CostError, IoError, LabelError, MetricsError, SolveError, SweepError, SynthError};
pub use label_space::{
    decode_anomalies, encode_final, validate_sequence, AnomalyFlags, FinalLabel, RawLabel, RawPath,
    Region, TransitionKind, Violation,
};
pub use metrics::EvalReport;
pub use scalar::Scalar;
pub use solver::{solve, solve_bruteforce, solve_subject, PathResult};

pub type Subject = SubjectRecord<f64>;
pub type Scores = VertebraScores<f64>;
pub type Outputs = NormalizedOutputs<f64>;
pub type Config = SolverConfig<f64>;
pub type Normalization = NormConfig<f64>;
pub type Costs = CostMatrix<f64>;
pub type Labeling = PathResult<f64>;

pub type Subject32 = SubjectRecord<f32>;
pub type Scores32 = VertebraScores<f32>;
pub type Outputs32 = NormalizedOutputs<f32>;
pub type Config32 = SolverConfig<f32>;
pub type Normalization32 = NormConfig<f32>;
pub type Costs32 = CostMatrix<f32>;
pub type Labeling32 = PathResult<f32>;
