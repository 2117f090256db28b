//! Synthetic spines and classifier outputs.
//!
//! Ground-truth spines are drawn with configurable thoracic (T11/T13) and
//! lumbar (L4/L6) enumeration anomaly rates. A generative stand-in for the
//! four-head classifier turns a truth sequence into score vectors; its
//! transition targets come from the same fulfilment rules the cost model uses.
//!
//! Every subject owns its own ChaCha stream derived from `(seed, index)`, so
//! corpora are reproducible and independent of generation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier_io::{SubjectRecord, VertebraScores};
use crate::error::SynthError;
use crate::label_space::{
    encode_final, fulfilled_transitions, validate_sequence, FinalLabel, RawLabel, Region,
    TransitionKind,
};
use crate::scalar::{cast, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FovMode {
    Full,
    /// One random contiguous window per spine, length drawn from `min_len..=max_len`.
    RandomWindow {
        min_len: usize,
        max_len: usize,
    },
    /// Every contiguous window of every length.
    AllWindows,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub tea_rate: f64,
    pub lea_rate: f64,
    /// Probability that a thoracic anomaly is T11 rather than T13.
    pub t11_vs_t13_split: f64,
    /// Probability that a lumbar anomaly is L4 rather than L6.
    pub l4_vs_l6_split: f64,
    pub fov_mode: FovMode,
    /// Emit classifier outputs for the spine as if anomalies had been counted
    /// away (twelve thoracic vertebrae), while keeping the true references.
    pub relabel_anomalies: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            tea_rate: 0.058,
            lea_rate: 0.097,
            t11_vs_t13_split: 0.5,
            l4_vs_l6_split: 0.5,
            fov_mode: FovMode::Full,
            relabel_anomalies: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let probs = [
            ("tea_rate", self.tea_rate),
            ("lea_rate", self.lea_rate),
            ("t11_vs_t13_split", self.t11_vs_t13_split),
            ("l4_vs_l6_split", self.l4_vs_l6_split),
        ];
        check_unit(&probs)?;
        if let FovMode::RandomWindow { min_len, max_len } = self.fov_mode {
            if min_len == 0 || min_len > max_len {
                return Err(SynthError::Config(format!(
                    "window lengths need 1 <= min ({min_len}) <= max ({max_len})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Label-head mass moved from the true label onto its neighbours.
    pub label_confusion: f64,
    /// Probability that any one head emits uniform scores for a vertebra.
    pub head_dropout: f64,
    /// Weight of the true transition kinds against a uniform floor.
    pub transition_strength: f64,
    /// Visibility lost by the first and last vertebra of the chain.
    pub visibility_boundary_decay: f64,
    pub seed: u64,
}

impl NoiseConfig {
    /// One-hot label and region heads, exact transition head, full visibility.
    pub fn noiseless() -> Self {
        Self {
            label_confusion: 0.0,
            head_dropout: 0.0,
            transition_strength: 1.0,
            visibility_boundary_decay: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        check_unit(&[
            ("label_confusion", self.label_confusion),
            ("head_dropout", self.head_dropout),
            ("transition_strength", self.transition_strength),
            ("visibility_boundary_decay", self.visibility_boundary_decay),
        ])
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::noiseless()
    }
}

fn check_unit(values: &[(&str, f64)]) -> Result<(), SynthError> {
    for &(name, v) in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(SynthError::Config(format!(
                "{name} must lie in [0, 1], got {v}"
            )));
        }
    }
    Ok(())
}

/// Independent random stream for subject `index` under `seed`.
pub fn subject_rng(seed: u64, index: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(4).wrapping_add(purpose));
    rng
}

const SPINE_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const FOV_STREAM: u64 = 2;

/// Number of thoracic and lumbar vertebrae of a full spine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpineShape {
    pub thoracic: u8,
    pub lumbar: u8,
}

impl SpineShape {
    pub const NORMAL: SpineShape = SpineShape {
        thoracic: 12,
        lumbar: 5,
    };

    /// All nine combinations of 11-13 thoracic and 4-6 lumbar vertebrae.
    pub fn all() -> impl Iterator<Item = SpineShape> {
        (11..=13).flat_map(|thoracic| (4..=6).map(move |lumbar| SpineShape { thoracic, lumbar }))
    }

    /// C1..C7, T1..T{thoracic}, L1..L{lumbar}.
    pub fn labels(self) -> Vec<FinalLabel> {
        let t1 = FinalLabel::T1 as usize;
        let l1 = FinalLabel::L1 as usize;
        let mut out: Vec<FinalLabel> = FinalLabel::ALL[..7].to_vec();
        out.extend_from_slice(&FinalLabel::ALL[t1..t1 + self.thoracic as usize]);
        out.extend_from_slice(&FinalLabel::ALL[l1..l1 + self.lumbar as usize]);
        out
    }
}

/// Draws a full spine with the configured anomaly rates from stream 0 of `cfg.seed`.
pub fn generate_spine(cfg: &SynthConfig) -> Vec<FinalLabel> {
    generate_spine_with(cfg, &mut subject_rng(cfg.seed, 0, SPINE_STREAM))
}

pub fn generate_spine_with<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Vec<FinalLabel> {
    let mut shape = SpineShape::NORMAL;
    // Draw all four numbers unconditionally so streams stay aligned across rates.
    let (tea, tea_kind, lea, lea_kind): (f64, f64, f64, f64) =
        (rng.gen(), rng.gen(), rng.gen(), rng.gen());
    if tea < cfg.tea_rate {
        shape.thoracic = if tea_kind < cfg.t11_vs_t13_split {
            11
        } else {
            13
        };
    }
    if lea < cfg.lea_rate {
        shape.lumbar = if lea_kind < cfg.l4_vs_l6_split { 4 } else { 6 };
    }
    shape.labels()
}

/// Relabels a full spine as if it had exactly twelve thoracic vertebrae: T13
/// becomes L1 and the lumbar labels shift down, or the L1 after a T11 becomes
/// T12 and the lumbar labels shift up. A T13 spine that already has six lumbar
/// vertebrae cannot be recounted and is returned unchanged.
pub fn remove_anomaly_labels(truth: &[FinalLabel]) -> Vec<FinalLabel> {
    let l1 = FinalLabel::L1 as usize;
    let lumbar_index = |l: FinalLabel| l as usize - l1;
    if truth.contains(&FinalLabel::T13) {
        if truth.contains(&FinalLabel::L6) {
            return truth.to_vec();
        }
        return truth
            .iter()
            .map(|&l| match l {
                FinalLabel::T13 => FinalLabel::L1,
                l if l.region() == Region::Lumbar => FinalLabel::ALL[l1 + lumbar_index(l) + 1],
                l => l,
            })
            .collect();
    }
    let skip = truth
        .windows(2)
        .any(|w| w[0] == FinalLabel::T11 && w[1] == FinalLabel::L1);
    if skip {
        return truth
            .iter()
            .map(|&l| match l {
                FinalLabel::L1 => FinalLabel::T12,
                l if l.region() == Region::Lumbar => FinalLabel::ALL[l1 + lumbar_index(l) - 1],
                l => l,
            })
            .collect();
    }
    truth.to_vec()
}

fn uniform_array<T: Scalar, const N: usize>() -> [T; N] {
    [cast(1.0 / N as f64); N]
}

/// Classifier outputs for a truth sequence, using `noise.seed` (stream 0).
pub fn emit_classifier_outputs<T: Scalar>(
    truth: &[FinalLabel],
    noise: &NoiseConfig,
    subject_id: &str,
) -> Result<SubjectRecord<T>, SynthError> {
    emit_classifier_outputs_with(
        truth,
        noise,
        subject_id,
        &mut subject_rng(noise.seed, 0, NOISE_STREAM),
    )
}

/// Builds one subject from a truth sequence.
///
/// - label head: `1 - label_confusion` on the encoded label (T13 -> T12,
///   L6 -> L5), the rest split randomly between the two neighbours;
/// - region head: one-hot on the true region;
/// - transition head: `transition_strength` spread over the kinds the truth
///   fulfils plus a uniform floor of `1 - transition_strength`;
/// - each head independently replaced by uniform scores with probability
///   `head_dropout`;
/// - visibility 1, times `1 - visibility_boundary_decay` at both ends.
pub fn emit_classifier_outputs_with<T: Scalar, R: Rng>(
    truth: &[FinalLabel],
    noise: &NoiseConfig,
    subject_id: &str,
    rng: &mut R,
) -> Result<SubjectRecord<T>, SynthError> {
    noise.validate()?;
    if truth.is_empty() {
        return Err(SynthError::TooShort { min: 1, n: 0 });
    }
    let raw_path = encode_final(truth).map_err(|e| SynthError::Config(e.to_string()))?;
    if let Some(v) = validate_sequence(&raw_path, true).first() {
        return Err(SynthError::Config(format!("truth is not anatomical: {v}")));
    }
    let raw = raw_path.labels();
    let n = truth.len();

    let vertebrae = (0..n)
        .map(|i| {
            let label = raw[i];
            let mut label_scores = [0.0f64; RawLabel::COUNT];
            let conf = noise.label_confusion;
            let split: f64 = rng.gen();
            label_scores[label.index()] = 1.0 - conf;
            let below = label.index().checked_sub(1);
            let above = label.succ().map(|l| l.index());
            match (below, above) {
                (Some(b), Some(a)) => {
                    label_scores[b] += conf * split;
                    label_scores[a] += conf * (1.0 - split);
                }
                (Some(only), None) | (None, Some(only)) => label_scores[only] += conf,
                (None, None) => unreachable!("alphabet has more than one label"),
            }

            let mut region_scores = [0.0f64; Region::COUNT];
            region_scores[label.region().index()] = 1.0;

            let fulfilled = fulfilled_transitions(label, raw.get(i + 1).copied());
            let hits = fulfilled.iter().filter(|&&f| f).count() as f64;
            let floor = (1.0 - noise.transition_strength) / TransitionKind::COUNT as f64;
            let mut transition_scores = [floor; TransitionKind::COUNT];
            for (score, &f) in transition_scores.iter_mut().zip(&fulfilled) {
                if f {
                    *score += noise.transition_strength / hits;
                }
            }

            let mut v = VertebraScores {
                label_scores: label_scores.map(cast),
                region_scores: region_scores.map(cast),
                transition_scores: transition_scores.map(cast),
                visibility: T::one(),
            };
            let drops: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
            if drops[0] < noise.head_dropout {
                v.label_scores = uniform_array();
            }
            if drops[1] < noise.head_dropout {
                v.region_scores = uniform_array();
            }
            if drops[2] < noise.head_dropout {
                v.transition_scores = uniform_array();
            }
            if i == 0 || i == n - 1 {
                v.visibility = cast(1.0 - noise.visibility_boundary_decay);
            }
            v
        })
        .collect();

    Ok(SubjectRecord {
        subject_id: subject_id.to_string(),
        vertebrae,
        reference_labels: Some(truth.to_vec()),
    })
}

/// Contiguous window `start..start + length`, references cropped alike.
pub fn crop_fov<T: Scalar>(
    subject: &SubjectRecord<T>,
    start: usize,
    length: usize,
) -> Result<SubjectRecord<T>, SynthError> {
    let n = subject.len();
    if length == 0 || start + length > n {
        return Err(SynthError::Window { start, length, n });
    }
    Ok(SubjectRecord {
        subject_id: format!("{}@{start}+{length}", subject.subject_id),
        vertebrae: subject.vertebrae[start..start + length].to_vec(),
        reference_labels: subject
            .reference_labels
            .as_ref()
            .map(|r| r[start..start + length].to_vec()),
    })
}

/// Every window of the given length, by ascending start.
pub fn windows_of_length<T: Scalar>(
    subject: &SubjectRecord<T>,
    length: usize,
) -> Vec<SubjectRecord<T>> {
    if length == 0 || length > subject.len() {
        return Vec::new();
    }
    (0..=subject.len() - length)
        .map(|start| crop_fov(subject, start, length).expect("window in range"))
        .collect()
}

/// Every contiguous window, by ascending length then start: n(n+1)/2 subjects.
pub fn all_windows<T: Scalar>(subject: &SubjectRecord<T>) -> Vec<SubjectRecord<T>> {
    (1..=subject.len())
        .flat_map(|length| windows_of_length(subject, length))
        .collect()
}

/// Removes one uniformly chosen vertebra; returns the gapped subject and the removed index.
pub fn inject_gap<T: Scalar>(
    subject: &SubjectRecord<T>,
    seed: u64,
) -> Result<(SubjectRecord<T>, usize), SynthError> {
    let n = subject.len();
    if n < 2 {
        return Err(SynthError::TooShort { min: 2, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let removed = rng.gen_range(0..n);
    let mut out = subject.clone();
    out.subject_id = format!("{}-gap{removed}", subject.subject_id);
    out.vertebrae.remove(removed);
    if let Some(r) = out.reference_labels.as_mut() {
        r.remove(removed);
    }
    Ok((out, removed))
}

/// `count` spines (before windowing) with classifier outputs.
pub fn generate_corpus<T: Scalar>(
    synth: &SynthConfig,
    noise: &NoiseConfig,
    count: usize,
) -> Result<Vec<SubjectRecord<T>>, SynthError> {
    synth.validate()?;
    noise.validate()?;
    let mut out = Vec::with_capacity(count);
    for index in 0..count as u64 {
        let truth = generate_spine_with(synth, &mut subject_rng(synth.seed, index, SPINE_STREAM));
        let id = format!("synth-{}-{index:05}", synth.seed);
        let shown = if synth.relabel_anomalies {
            remove_anomaly_labels(&truth)
        } else {
            truth.clone()
        };
        let mut subject: SubjectRecord<T> = emit_classifier_outputs_with(
            &shown,
            noise,
            &id,
            &mut subject_rng(noise.seed, index, NOISE_STREAM),
        )?;
        subject.reference_labels = Some(truth);
        match synth.fov_mode {
            FovMode::Full => out.push(subject),
            FovMode::RandomWindow { min_len, max_len } => {
                let mut rng = subject_rng(synth.seed, index, FOV_STREAM);
                let n = subject.len();
                let length = rng.gen_range(min_len.min(n)..=max_len.min(n));
                let start = rng.gen_range(0..=n - length);
                out.push(crop_fov(&subject, start, length)?);
            }
            FovMode::AllWindows => out.extend(all_windows(&subject)),
        }
    }
    Ok(out)
}
