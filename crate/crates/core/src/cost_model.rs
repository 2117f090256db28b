//! Label cost matrix, path-dependent transition reward and total path cost.
//!
//! A path's cost is
//!
//! ```text
//! pathcost(p) = -sum_i s_i * (transcost(p, i) + L[i][p_i])
//!               + gamma * (#anomaly categories in p)
//!               + gap_penalty * (#skipped labels in p)
//! L[i][j]     = w_C * c[i][j] + w_R * r[i][j]
//! transcost   = w_T * sum over fulfilled kinds k of t[i][k]
//! ```
//!
//! Lower is better.

use crate::classifier_io::NormalizedOutputs;
use crate::error::CostError;
use crate::label_space::{fulfilled_transitions, RawLabel, RawPath, TransitionKind};
use crate::scalar::{cast, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Label-head weight.
    pub w_label: T,
    /// Region-head weight.
    pub w_region: T,
    /// Transition-head weight.
    pub w_transition: T,
    /// Added once per anomaly category (thoracic, lumbar) present in a path.
    /// Positive values penalize anomalous paths.
    pub anomaly_gamma: T,
    pub gaps_enabled: bool,
    /// Cost per skipped label when gaps are enabled.
    pub gap_penalty: T,
    /// Whether the "no transition" class contributes to the transition reward.
    pub include_none_transition: bool,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            w_label: cast(0.9),
            w_region: cast(1.1),
            w_transition: cast(0.6),
            anomaly_gamma: T::zero(),
            gaps_enabled: false,
            gap_penalty: T::zero(),
            include_none_transition: true,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    /// Unit weights on all three heads.
    pub fn unit() -> Self {
        Self {
            w_label: T::one(),
            w_region: T::one(),
            w_transition: T::one(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let named = [
            ("w_label", self.w_label),
            ("w_region", self.w_region),
            ("w_transition", self.w_transition),
            ("gap_penalty", self.gap_penalty),
        ];
        for (name, value) in named {
            if !value.is_finite() || value < T::zero() {
                return Err(CostError::Config(format!(
                    "{name} must be finite and >= 0, got {value}"
                )));
            }
        }
        if !self.anomaly_gamma.is_finite() {
            return Err(CostError::Config("anomaly_gamma must be finite".into()));
        }
        Ok(())
    }
}

/// `L[i][j]`: combined label and region agreement for vertebra `i` and label `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    rows: Vec<[T; RawLabel::COUNT]>,
}

impl<T: Scalar> CostMatrix<T> {
    pub fn from_rows(rows: Vec<[T; RawLabel::COUNT]>) -> Self {
        Self { rows }
    }

    #[inline]
    pub fn get(&self, i: usize, label: RawLabel) -> T {
        self.rows[i][label.index()]
    }

    pub fn rows(&self) -> &[[T; RawLabel::COUNT]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn build_label_cost<T: Scalar>(
    norm: &NormalizedOutputs<T>,
    cfg: &SolverConfig<T>,
) -> CostMatrix<T> {
    let rows = norm
        .c
        .iter()
        .zip(&norm.r_expanded)
        .map(|(c, r)| {
            let mut row = [T::zero(); RawLabel::COUNT];
            for (j, out) in row.iter_mut().enumerate() {
                *out = c[j] * cfg.w_label + r[j] * cfg.w_region;
            }
            row
        })
        .collect();
    CostMatrix { rows }
}

/// Transition score `t[i][k]` if kind `k` is fulfilled at position `i` of the path, else zero.
pub fn transcondition<T: Scalar>(
    path: &RawPath,
    i: usize,
    kind: TransitionKind,
    norm: &NormalizedOutputs<T>,
) -> T {
    let labels = path.labels();
    let fulfilled = fulfilled_transitions(labels[i], labels.get(i + 1).copied());
    if fulfilled[kind.index()] {
        norm.t[i][kind.index()]
    } else {
        T::zero()
    }
}

/// Weighted sum of the fulfilled transition scores at position `i`.
pub fn transcost<T: Scalar>(
    path: &RawPath,
    i: usize,
    norm: &NormalizedOutputs<T>,
    cfg: &SolverConfig<T>,
) -> T {
    let labels = path.labels();
    let fulfilled = fulfilled_transitions(labels[i], labels.get(i + 1).copied());
    let sum: T = TransitionKind::ALL
        .iter()
        .filter(|&&k| fulfilled[k.index()])
        .filter(|&&k| cfg.include_none_transition || k != TransitionKind::None)
        .map(|&k| norm.t[i][k.index()])
        .sum();
    cfg.w_transition * sum
}

/// Total cost of a complete path; lower is better.
pub fn pathcost<T: Scalar>(
    path: &RawPath,
    norm: &NormalizedOutputs<T>,
    label_cost: &CostMatrix<T>,
    cfg: &SolverConfig<T>,
) -> Result<T, CostError> {
    if path.len() != norm.len() || label_cost.len() != norm.len() {
        return Err(CostError::LengthMismatch {
            path: path.len(),
            subject: norm.len(),
        });
    }
    let agreement: T = path
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &label)| norm.s[i] * (transcost(path, i, norm, cfg) + label_cost.get(i, label)))
        .sum();
    let mut cost = -agreement;
    cost = cost + cfg.anomaly_gamma * cast(path.flags().categories() as f64);
    if cfg.gaps_enabled {
        cost = cost + cfg.gap_penalty * cast(path.skipped_labels() as f64);
    }
    Ok(cost)
}
