//! Evaluation of predicted against reference label sequences.
//!
//! All metrics work on decoded [`FinalLabel`] sequences:
//!
//! - perfect label percentage: subjects whose whole sequence matches;
//! - subject correctness: mean and population standard deviation of the
//!   per-subject share of correct vertebrae;
//! - TEA recall: reference subjects with a T11 -> L1 adjacency or a T13 whose
//!   prediction has the same labels at the same positions;
//! - LEA recall: reference subjects ending on L4 (prediction must end on L4
//!   too) or containing L6 (prediction must have L5, L6 at the same positions).
//!
//! Recalls are `None` when the references contain no case of that kind.

use serde::Serialize;

use crate::error::MetricsError;
use crate::label_space::FinalLabel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub plp: f64,
    pub subject_correctness_mean: f64,
    pub subject_correctness_std: f64,
    pub tea_recall: Option<f64>,
    pub lea_recall: Option<f64>,
    pub n_subjects: usize,
    pub n_tea_cases: usize,
    pub n_lea_cases: usize,
}

pub const CSV_HEADER: &str = "param,plp,subj_corr_mean,subj_corr_std,tea_recall,lea_recall,n";

impl EvalReport {
    pub fn compute<P: AsRef<[FinalLabel]>>(pairs: &[(P, P)]) -> Result<Self, MetricsError> {
        check(pairs)?;
        let (subject_correctness_mean, subject_correctness_std) = subject_correctness(pairs)?;
        let tea = recall(pairs, tea_case);
        let lea = recall(pairs, lea_case);
        Ok(Self {
            plp: perfect_label_percentage(pairs)?,
            subject_correctness_mean,
            subject_correctness_std,
            tea_recall: tea.percentage(),
            lea_recall: lea.percentage(),
            n_subjects: pairs.len(),
            n_tea_cases: tea.cases,
            n_lea_cases: lea.cases,
        })
    }

    /// One CSV row under [`CSV_HEADER`]; absent recalls are empty cells.
    pub fn csv_row(&self, param: &str) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{param},{},{},{},{},{},{}",
            self.plp,
            self.subject_correctness_mean,
            self.subject_correctness_std,
            opt(self.tea_recall),
            opt(self.lea_recall),
            self.n_subjects
        )
    }
}

fn check<P: AsRef<[FinalLabel]>>(pairs: &[(P, P)]) -> Result<(), MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (index, (p, r)) in pairs.iter().enumerate() {
        let (p, r) = (p.as_ref(), r.as_ref());
        if p.len() != r.len() {
            return Err(MetricsError::LengthMismatch {
                index,
                predicted: p.len(),
                reference: r.len(),
            });
        }
    }
    Ok(())
}

pub fn perfect_label_percentage<P: AsRef<[FinalLabel]>>(
    pairs: &[(P, P)],
) -> Result<f64, MetricsError> {
    check(pairs)?;
    let exact = pairs
        .iter()
        .filter(|(p, r)| p.as_ref() == r.as_ref())
        .count();
    Ok(100.0 * exact as f64 / pairs.len() as f64)
}

/// Mean and population standard deviation of per-subject percentages of correct vertebrae.
pub fn subject_correctness<P: AsRef<[FinalLabel]>>(
    pairs: &[(P, P)],
) -> Result<(f64, f64), MetricsError> {
    check(pairs)?;
    let mut per_subject: Vec<f64> = pairs
        .iter()
        .map(|(p, r)| {
            let (p, r) = (p.as_ref(), r.as_ref());
            let correct = p.iter().zip(r).filter(|(a, b)| a == b).count();
            100.0 * correct as f64 / r.len().max(1) as f64
        })
        .collect();
    // Sorted so the floating-point sums do not depend on subject order.
    per_subject.sort_by(f64::total_cmp);
    let n = per_subject.len() as f64;
    let mean = per_subject.iter().sum::<f64>() / n;
    let var = per_subject.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

pub fn tea_recall<P: AsRef<[FinalLabel]>>(pairs: &[(P, P)]) -> Result<Option<f64>, MetricsError> {
    check(pairs)?;
    Ok(recall(pairs, tea_case).percentage())
}

pub fn lea_recall<P: AsRef<[FinalLabel]>>(pairs: &[(P, P)]) -> Result<Option<f64>, MetricsError> {
    check(pairs)?;
    Ok(recall(pairs, lea_case).percentage())
}

struct Recall {
    cases: usize,
    hits: usize,
}

impl Recall {
    fn percentage(&self) -> Option<f64> {
        (self.cases > 0).then(|| 100.0 * self.hits as f64 / self.cases as f64)
    }
}

/// `Some(correct)` when the reference is a case, `None` otherwise.
type CaseRule = fn(&[FinalLabel], &[FinalLabel]) -> Option<bool>;

fn recall<P: AsRef<[FinalLabel]>>(pairs: &[(P, P)], rule: CaseRule) -> Recall {
    let mut out = Recall { cases: 0, hits: 0 };
    for (p, r) in pairs {
        if let Some(hit) = rule(p.as_ref(), r.as_ref()) {
            out.cases += 1;
            out.hits += hit as usize;
        }
    }
    out
}

fn matches_at(
    pred: &[FinalLabel],
    reference: &[FinalLabel],
    positions: std::ops::Range<usize>,
) -> bool {
    pred.get(positions.clone()) == reference.get(positions)
}

fn tea_case(pred: &[FinalLabel], reference: &[FinalLabel]) -> Option<bool> {
    if let Some(k) = reference.iter().position(|&l| l == FinalLabel::T13) {
        return Some(matches_at(pred, reference, k.saturating_sub(1)..k + 1));
    }
    let k = reference
        .windows(2)
        .position(|w| w[0] == FinalLabel::T11 && w[1] == FinalLabel::L1)?;
    Some(matches_at(pred, reference, k..k + 2))
}

fn lea_case(pred: &[FinalLabel], reference: &[FinalLabel]) -> Option<bool> {
    if let Some(k) = reference.iter().position(|&l| l == FinalLabel::L6) {
        return Some(matches_at(pred, reference, k.saturating_sub(1)..k + 1));
    }
    if reference.last() == Some(&FinalLabel::L4) {
        return Some(pred.last() == Some(&FinalLabel::L4));
    }
    None
}
