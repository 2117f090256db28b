//! Batch labelling, evaluation and parameter sweeps over a corpus.
//!
//! Subjects are solved on the rayon pool of the caller; results keep input
//! order, so reports do not depend on the worker count.

use rayon::prelude::*;

use crate::classifier_io::{NormConfig, SubjectRecord};
use crate::cost_model::SolverConfig;
use crate::error::{SolveError, SweepError};
use crate::label_space::FinalLabel;
use crate::metrics::{EvalReport, CSV_HEADER};
use crate::scalar::{cast, Scalar};
use crate::solver::{solve_subject, PathResult};
use crate::synthgen::windows_of_length;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Anomaly cost `gamma`.
    Gamma,
    /// Per-label gap penalty, with gaps enabled.
    SkipCost,
    /// Window length; every window position of that length is evaluated.
    Fov,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl SweepSpec {
    pub fn gamma() -> Self {
        Self {
            kind: SweepKind::Gamma,
            lo: -2.0,
            hi: 2.0,
            step: 0.25,
        }
    }

    pub fn skip_cost() -> Self {
        Self {
            kind: SweepKind::SkipCost,
            lo: 0.0,
            hi: 2.0,
            step: 0.25,
        }
    }

    /// Window lengths `lo..=hi`.
    pub fn fov(lo: usize, hi: usize) -> Self {
        Self {
            kind: SweepKind::Fov,
            lo: lo as f64,
            hi: hi as f64,
            step: 1.0,
        }
    }

    /// Grid `lo + k * step` for `k = 0, 1, ...` up to `hi`. Values within
    /// `1e-9 * step` of zero are snapped to exactly zero.
    pub fn values(&self) -> Result<Vec<f64>, SweepError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.step.is_finite()) {
            return Err(SweepError::Range("bounds and step must be finite".into()));
        }
        if self.step <= 0.0 {
            return Err(SweepError::Range(format!(
                "step must be > 0, got {}",
                self.step
            )));
        }
        if self.lo > self.hi {
            return Err(SweepError::Range(format!(
                "lo ({}) exceeds hi ({})",
                self.lo, self.hi
            )));
        }
        match self.kind {
            SweepKind::SkipCost if self.lo < 0.0 => {
                return Err(SweepError::Range(format!(
                    "skip cost must be >= 0, got {}",
                    self.lo
                )));
            }
            SweepKind::Fov
                if self.lo < 1.0
                    || self.lo.fract() != 0.0
                    || self.hi.fract() != 0.0
                    || self.step.fract() != 0.0 =>
            {
                return Err(SweepError::Range(
                    "window lengths and step must be positive integers".into(),
                ));
            }
            _ => {}
        }
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|k| {
                let v = self.lo + k as f64 * self.step;
                if v.abs() < 1e-9 * self.step {
                    0.0
                } else {
                    v
                }
            })
            .collect())
    }
}

/// Solves every subject; one failure does not affect the others.
pub fn label_corpus<T: Scalar>(
    subjects: &[SubjectRecord<T>],
    norm_cfg: &NormConfig<T>,
    cfg: &SolverConfig<T>,
) -> Vec<Result<PathResult<T>, SolveError>> {
    subjects
        .par_iter()
        .map(|s| solve_subject(s, norm_cfg, cfg))
        .collect()
}

/// Report over subjects with reference labels. A failed subject is an error.
pub fn evaluate<T: Scalar>(
    subjects: &[SubjectRecord<T>],
    results: &[Result<PathResult<T>, SolveError>],
) -> Result<EvalReport, SweepError> {
    let mut pairs: Vec<(&[FinalLabel], &[FinalLabel])> = Vec::with_capacity(subjects.len());
    for (subject, result) in subjects.iter().zip(results) {
        let reference = subject
            .reference_labels
            .as_deref()
            .ok_or_else(|| SweepError::MissingReference(subject.subject_id.clone()))?;
        let result = result.as_ref().map_err(|e| SweepError::Solve {
            id: subject.subject_id.clone(),
            source: e.clone(),
        })?;
        pairs.push((&result.final_labels, reference));
    }
    Ok(EvalReport::compute(&pairs)?)
}

/// Labels and evaluates a corpus in one go.
pub fn label_and_evaluate<T: Scalar>(
    subjects: &[SubjectRecord<T>],
    norm_cfg: &NormConfig<T>,
    cfg: &SolverConfig<T>,
) -> Result<EvalReport, SweepError> {
    evaluate(subjects, &label_corpus(subjects, norm_cfg, cfg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub report: EvalReport,
    /// Subjects predicted with an anomaly flag.
    pub anomalous: usize,
}

impl SweepRow {
    pub fn csv(&self) -> String {
        self.report.csv_row(&self.param.to_string())
    }
}

/// One row per grid value. The FOV sweep pools all window positions of each
/// length; lengths longer than every subject are skipped.
pub fn run_sweep<T: Scalar>(
    corpus: &[SubjectRecord<T>],
    spec: &SweepSpec,
    norm_cfg: &NormConfig<T>,
    base: &SolverConfig<T>,
) -> Result<Vec<SweepRow>, SweepError> {
    let values = spec.values()?;
    let mut rows = Vec::with_capacity(values.len());
    for param in values {
        let mut cfg = *base;
        let windows;
        let subjects: &[SubjectRecord<T>] = match spec.kind {
            SweepKind::Gamma => {
                cfg.anomaly_gamma = cast(param);
                corpus
            }
            SweepKind::SkipCost => {
                cfg.gaps_enabled = true;
                cfg.gap_penalty = cast(param);
                corpus
            }
            SweepKind::Fov => {
                windows = corpus
                    .iter()
                    .flat_map(|s| windows_of_length(s, param as usize))
                    .collect::<Vec<_>>();
                &windows
            }
        };
        if subjects.is_empty() {
            continue;
        }
        let results = label_corpus(subjects, norm_cfg, &cfg);
        let anomalous = results
            .iter()
            .filter(|r| r.as_ref().is_ok_and(|p| p.is_anomalous()))
            .count();
        let report = evaluate(subjects, &results)?;
        rows.push(SweepRow {
            param,
            report,
            anomalous,
        });
    }
    Ok(rows)
}

/// Header plus one line per row, newline-terminated.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv());
        out.push('\n');
    }
    out
}
