//! Per-vertebra classifier outputs: the subject document format and the
//! post-processing applied before costs are computed.
//!
//! A subject document is one JSON object:
//!
//! ```json
//! {"subject_id": "s1",
//!  "vertebrae": [{"label_scores": [24 numbers, C1..L5],
//!                 "region_scores": [cervical, thoracic, lumbar],
//!                 "transition_scores": [none, last_cervical, first_thoracic,
//!                                       last_thoracic, first_lumbar, last_lumbar],
//!                 "visibility": 0.97}],
//!  "reference_labels": ["T11", "T12", "T13", "L1"]}
//! ```
//!
//! Vertebrae are listed cranio-caudally. `visibility` may also be given as a
//! one-element array. `reference_labels` is optional. Batch files hold one
//! document per line.

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::label_space::{
    encode_final, validate_sequence, FinalLabel, RawLabel, Region, TransitionKind,
};
use crate::scalar::{cast, to_f64, Scalar};

const SOFTMAX_TOLERANCE: f64 = 1e-6;

/// Raw classifier outputs for one vertebra.
#[derive(Debug, Clone, PartialEq)]
pub struct VertebraScores<T> {
    pub label_scores: [T; RawLabel::COUNT],
    pub region_scores: [T; Region::COUNT],
    pub transition_scores: [T; TransitionKind::COUNT],
    pub visibility: T,
}

impl<T: Scalar> VertebraScores<T> {
    /// Uniform softmax outputs with full visibility.
    pub fn uniform() -> Self {
        Self {
            label_scores: [cast(1.0 / RawLabel::COUNT as f64); RawLabel::COUNT],
            region_scores: [cast(1.0 / Region::COUNT as f64); Region::COUNT],
            transition_scores: [cast(1.0 / TransitionKind::COUNT as f64); TransitionKind::COUNT],
            visibility: T::one(),
        }
    }
}

/// One subject: the ordered vertebra chain and optional reference labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord<T> {
    pub subject_id: String,
    pub vertebrae: Vec<VertebraScores<T>>,
    pub reference_labels: Option<Vec<FinalLabel>>,
}

impl<T: Scalar> SubjectRecord<T> {
    pub fn len(&self) -> usize {
        self.vertebrae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertebrae.is_empty()
    }

    /// Checks the invariants `parse_subject` enforces.
    pub fn validate(&self) -> Result<(), IoError> {
        if self.vertebrae.is_empty() {
            return Err(IoError::Validation {
                field: "vertebrae".into(),
                reason: "at least one vertebra is required".into(),
            });
        }
        for (i, v) in self.vertebrae.iter().enumerate() {
            check_softmax(&format!("vertebrae[{i}].label_scores"), &v.label_scores)?;
            check_softmax(&format!("vertebrae[{i}].region_scores"), &v.region_scores)?;
            check_softmax(
                &format!("vertebrae[{i}].transition_scores"),
                &v.transition_scores,
            )?;
            let s = to_f64(v.visibility);
            if !(0.0..=1.0).contains(&s) {
                return Err(IoError::Validation {
                    field: format!("vertebrae[{i}].visibility"),
                    reason: format!("{s} is outside [0, 1]"),
                });
            }
        }
        if let Some(refs) = &self.reference_labels {
            if refs.len() != self.vertebrae.len() {
                return Err(IoError::Schema {
                    field: "reference_labels".into(),
                    expected: self.vertebrae.len(),
                    found: refs.len(),
                });
            }
            let violations = encode_final(refs)
                .map(|p| validate_sequence(&p, true))
                .unwrap_or_default();
            if let Some(v) = violations.first() {
                return Err(IoError::Validation {
                    field: "reference_labels".into(),
                    reason: format!("not an anatomical sequence: {v}"),
                });
            }
        }
        Ok(())
    }
}

fn check_softmax<T: Scalar>(field: &str, values: &[T]) -> Result<(), IoError> {
    let mut sum = 0.0;
    for (k, &x) in values.iter().enumerate() {
        let x = to_f64(x);
        if !x.is_finite() || x < 0.0 {
            return Err(IoError::Validation {
                field: format!("{field}[{k}]"),
                reason: format!("score {x} must be finite and non-negative"),
            });
        }
        sum += x;
    }
    if (sum - 1.0).abs() > SOFTMAX_TOLERANCE {
        return Err(IoError::Validation {
            field: field.to_string(),
            reason: format!("softmax scores sum to {sum}, expected 1"),
        });
    }
    Ok(())
}

#[derive(Deserialize)]
struct SubjectWire {
    subject_id: String,
    vertebrae: Vec<VertebraWire>,
    #[serde(default)]
    reference_labels: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct VertebraWire {
    label_scores: Vec<f64>,
    region_scores: Vec<f64>,
    transition_scores: Vec<f64>,
    visibility: VisibilityWire,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VisibilityWire {
    Scalar(f64),
    Array(Vec<f64>),
}

#[derive(Serialize)]
struct SubjectOut<'a> {
    subject_id: &'a str,
    vertebrae: Vec<VertebraOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_labels: Option<&'a [FinalLabel]>,
}

#[derive(Serialize)]
struct VertebraOut {
    label_scores: Vec<f64>,
    region_scores: Vec<f64>,
    transition_scores: Vec<f64>,
    visibility: f64,
}

fn fixed<T: Scalar, const N: usize>(field: String, values: &[f64]) -> Result<[T; N], IoError> {
    if values.len() != N {
        return Err(IoError::Schema {
            field,
            expected: N,
            found: values.len(),
        });
    }
    let mut out = [T::zero(); N];
    for (o, &v) in out.iter_mut().zip(values) {
        *o = cast(v);
    }
    Ok(out)
}

/// Extracts `subject_id` from a document that may otherwise be malformed.
pub fn peek_subject_id(document: &str) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(document).ok()?;
    value.get("subject_id")?.as_str().map(str::to_string)
}

/// Parses and validates one subject document.
pub fn parse_subject<T: Scalar>(document: &str) -> Result<SubjectRecord<T>, IoError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let wire: SubjectWire = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        IoError::Parse {
            field: if path == "." {
                "<document>".into()
            } else {
                path
            },
            message: e.into_inner().to_string(),
        }
    })?;

    let mut vertebrae = Vec::with_capacity(wire.vertebrae.len());
    for (i, v) in wire.vertebrae.iter().enumerate() {
        let visibility = match &v.visibility {
            VisibilityWire::Scalar(s) => *s,
            VisibilityWire::Array(a) if a.len() == 1 => a[0],
            VisibilityWire::Array(a) => {
                return Err(IoError::Schema {
                    field: format!("vertebrae[{i}].visibility"),
                    expected: 1,
                    found: a.len(),
                })
            }
        };
        vertebrae.push(VertebraScores {
            label_scores: fixed(format!("vertebrae[{i}].label_scores"), &v.label_scores)?,
            region_scores: fixed(format!("vertebrae[{i}].region_scores"), &v.region_scores)?,
            transition_scores: fixed(
                format!("vertebrae[{i}].transition_scores"),
                &v.transition_scores,
            )?,
            visibility: cast(visibility),
        });
    }

    let reference_labels = match wire.reference_labels {
        None => None,
        Some(names) => Some(
            names
                .iter()
                .enumerate()
                .map(|(k, n)| {
                    n.parse().map_err(|_| IoError::Validation {
                        field: format!("reference_labels[{k}]"),
                        reason: format!("unknown label `{n}`"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };

    let subject = SubjectRecord {
        subject_id: wire.subject_id,
        vertebrae,
        reference_labels,
    };
    subject.validate()?;
    Ok(subject)
}

/// Serializes a subject as a single-line document.
pub fn subject_to_json<T: Scalar>(subject: &SubjectRecord<T>) -> String {
    let conv = |xs: &[T]| xs.iter().map(|&x| to_f64(x)).collect::<Vec<_>>();
    let out = SubjectOut {
        subject_id: &subject.subject_id,
        vertebrae: subject
            .vertebrae
            .iter()
            .map(|v| VertebraOut {
                label_scores: conv(&v.label_scores),
                region_scores: conv(&v.region_scores),
                transition_scores: conv(&v.transition_scores),
                visibility: to_f64(v.visibility),
            })
            .collect(),
        reference_labels: subject.reference_labels.as_deref(),
    };
    serde_json::to_string(&out).expect("subject serializes")
}

/// Post-processing switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormConfig<T> {
    /// Standard deviation of the smoothing kernel, in vertebrae.
    pub gaussian_sigma: T,
    pub enable_smoothing: bool,
    pub transition_column_norm: bool,
}

impl<T: Scalar> Default for NormConfig<T> {
    fn default() -> Self {
        Self {
            gaussian_sigma: T::one(),
            enable_smoothing: true,
            transition_column_norm: true,
        }
    }
}

impl<T: Scalar> NormConfig<T> {
    /// Passes scores through untouched (apart from region expansion).
    pub fn identity() -> Self {
        Self {
            gaussian_sigma: T::zero(),
            enable_smoothing: false,
            transition_column_norm: false,
        }
    }
}

/// Scores in the form the cost model consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedOutputs<T> {
    /// Label scores `c[i][j]`.
    pub c: Vec<[T; RawLabel::COUNT]>,
    /// Region scores copied onto every label of the region.
    pub r_expanded: Vec<[T; RawLabel::COUNT]>,
    /// Transition scores `t[i][k]`.
    pub t: Vec<[T; TransitionKind::COUNT]>,
    /// Visibility weights.
    pub s: Vec<T>,
}

impl<T: Scalar> NormalizedOutputs<T> {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// All-zero outputs with unit visibility for `n` vertebrae.
    pub fn zeros(n: usize) -> Self {
        Self {
            c: vec![[T::zero(); RawLabel::COUNT]; n],
            r_expanded: vec![[T::zero(); RawLabel::COUNT]; n],
            t: vec![[T::zero(); TransitionKind::COUNT]; n],
            s: vec![T::one(); n],
        }
    }
}

/// Discrete Gaussian taps for offsets `-R..=R`, `R = ceil(3 sigma)`, summing to one.
pub fn gaussian_kernel<T: Scalar>(sigma: T) -> Vec<T> {
    if sigma <= T::zero() {
        return vec![T::one()];
    }
    let radius = (sigma * cast(3.0)).ceil().to_usize().unwrap_or(0);
    let two_var = cast::<T>(2.0) * sigma * sigma;
    let taps: Vec<T> = (0..=2 * radius)
        .map(|k| {
            let d: T = cast(k as f64 - radius as f64);
            (-(d * d) / two_var).exp()
        })
        .collect();
    let total: T = taps.iter().copied().sum();
    taps.into_iter().map(|w| w / total).collect()
}

/// Convolves each column along the vertebra axis; positions outside the chain count as zero.
fn smooth_columns<T: Scalar, const K: usize>(rows: &[[T; K]], kernel: &[T]) -> Vec<[T; K]> {
    let n = rows.len() as isize;
    let radius = (kernel.len() / 2) as isize;
    (0..n)
        .map(|i| {
            let mut out = [T::zero(); K];
            for (tap, &w) in kernel.iter().enumerate() {
                let src = i + tap as isize - radius;
                if (0..n).contains(&src) {
                    for (o, &x) in out.iter_mut().zip(&rows[src as usize]) {
                        *o = *o + w * x;
                    }
                }
            }
            out
        })
        .collect()
}

fn cap_unit_norm<T: Scalar, const K: usize>(row: &mut [T; K]) {
    let norm = row.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > T::one() {
        for x in row.iter_mut() {
            *x = *x / norm;
        }
    }
}

/// Smooths label and region scores along the chain, caps each vector at unit
/// Euclidean norm, deflates transition columns whose mass exceeds one, and
/// expands region scores onto the label axis. Visibility passes through.
pub fn normalize_outputs<T: Scalar>(
    subject: &SubjectRecord<T>,
    cfg: &NormConfig<T>,
) -> NormalizedOutputs<T> {
    let mut c: Vec<[T; RawLabel::COUNT]> =
        subject.vertebrae.iter().map(|v| v.label_scores).collect();
    let mut r: Vec<[T; Region::COUNT]> =
        subject.vertebrae.iter().map(|v| v.region_scores).collect();
    let mut t: Vec<[T; TransitionKind::COUNT]> = subject
        .vertebrae
        .iter()
        .map(|v| v.transition_scores)
        .collect();
    let s = subject.vertebrae.iter().map(|v| v.visibility).collect();

    if cfg.enable_smoothing && cfg.gaussian_sigma > T::zero() {
        let kernel = gaussian_kernel(cfg.gaussian_sigma);
        c = smooth_columns(&c, &kernel);
        r = smooth_columns(&r, &kernel);
    }
    c.iter_mut().for_each(cap_unit_norm);
    r.iter_mut().for_each(cap_unit_norm);

    if cfg.transition_column_norm {
        for k in 0..TransitionKind::COUNT {
            let mass: T = t.iter().map(|row| row[k]).sum();
            if mass > T::one() {
                t.iter_mut().for_each(|row| row[k] = row[k] / mass);
            }
        }
    }

    let r_expanded = r
        .iter()
        .map(|row| {
            let mut out = [T::zero(); RawLabel::COUNT];
            for region in Region::ALL {
                for j in region.labels() {
                    out[j] = row[region.index()];
                }
            }
            out
        })
        .collect();

    NormalizedOutputs {
        c,
        r_expanded,
        t,
        s,
    }
}
