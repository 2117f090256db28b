//! Vertebra label alphabet, anatomical regions, transition kinds and the
//! path validity rules shared by the solver, the generator and the tests.
//!
//! The solver searches over the 24 [`RawLabel`]s C1..L5. Thirteen thoracic or
//! six lumbar vertebrae are represented as a doubled T12 or L5 and only
//! become T13/L6 when a path is decoded into [`FinalLabel`]s. Eleven thoracic
//! vertebrae are represented by a direct T11 -> L1 step.
//!
//! Index order of [`RawLabel`], [`Region`] and [`TransitionKind`] is the
//! serialization order of every score vector in the subject file format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::LabelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    Cervical,
    Thoracic,
    Lumbar,
}

impl Region {
    pub const COUNT: usize = 3;
    pub const ALL: [Region; 3] = [Region::Cervical, Region::Thoracic, Region::Lumbar];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Raw labels belonging to this region, in index order.
    pub fn labels(self) -> std::ops::RangeInclusive<usize> {
        match self {
            Region::Cervical => 0..=6,
            Region::Thoracic => 7..=18,
            Region::Lumbar => 19..=23,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Cervical => "cervical",
            Region::Thoracic => "thoracic",
            Region::Lumbar => "lumbar",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the 24 labels the solver assigns: C1..C7, T1..T12, L1..L5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum RawLabel {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
    T10,
    T11,
    T12,
    L1,
    L2,
    L3,
    L4,
    L5,
}

impl RawLabel {
    pub const COUNT: usize = 24;

    #[rustfmt::skip]
    pub const ALL: [RawLabel; 24] = {
        use RawLabel::*;
        [
            C1, C2, C3, C4, C5, C6, C7,
            T1, T2, T3, T4, T5, T6, T7, T8, T9, T10, T11, T12,
            L1, L2, L3, L4, L5,
        ]
    };

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    #[inline]
    pub fn region(self) -> Region {
        region_of(self)
    }

    pub fn name(self) -> &'static str {
        FinalLabel::from_raw(self).name()
    }

    /// Next label in cranio-caudal order, `None` after L5.
    pub fn succ(self) -> Option<Self> {
        Self::from_index(self.index() + 1)
    }
}

impl fmt::Display for RawLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Region of a raw label: indices 0-6 cervical, 7-18 thoracic, 19-23 lumbar.
#[inline]
pub fn region_of(label: RawLabel) -> Region {
    match label.index() {
        0..=6 => Region::Cervical,
        7..=18 => Region::Thoracic,
        _ => Region::Lumbar,
    }
}

/// Decoded label, including the anomaly labels T13 and L6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum FinalLabel {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
    T10,
    T11,
    T12,
    T13,
    L1,
    L2,
    L3,
    L4,
    L5,
    L6,
}

impl FinalLabel {
    pub const COUNT: usize = 26;

    #[rustfmt::skip]
    pub const ALL: [FinalLabel; 26] = {
        use FinalLabel::*;
        [
            C1, C2, C3, C4, C5, C6, C7,
            T1, T2, T3, T4, T5, T6, T7, T8, T9, T10, T11, T12, T13,
            L1, L2, L3, L4, L5, L6,
        ]
    };

    const NAMES: [&'static str; 26] = [
        "C1", "C2", "C3", "C4", "C5", "C6", "C7", "T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8",
        "T9", "T10", "T11", "T12", "T13", "L1", "L2", "L3", "L4", "L5", "L6",
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }

    /// Label for a raw label that was not the second element of a double.
    pub fn from_raw(label: RawLabel) -> Self {
        let i = label.index();
        // T13 sits between T12 and L1 in the decoded alphabet.
        if i <= RawLabel::T12.index() {
            Self::ALL[i]
        } else {
            Self::ALL[i + 1]
        }
    }

    /// Raw label the solver uses for this vertebra (T13 -> T12, L6 -> L5).
    pub fn encode(self) -> RawLabel {
        match self {
            FinalLabel::T13 => RawLabel::T12,
            FinalLabel::L6 => RawLabel::L5,
            other => {
                let i = other as usize;
                if i <= FinalLabel::T12 as usize {
                    RawLabel::ALL[i]
                } else {
                    RawLabel::ALL[i - 1]
                }
            }
        }
    }

    pub fn region(self) -> Region {
        self.encode().region()
    }
}

impl fmt::Display for FinalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FinalLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        Self::NAMES
            .iter()
            .position(|n| *n == upper)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| LabelError::UnknownLabel(s.to_string()))
    }
}

impl Serialize for FinalLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FinalLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for RawLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

/// Output classes of the transition head, in serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    None,
    LastCervical,
    FirstThoracic,
    LastThoracic,
    FirstLumbar,
    LastLumbar,
}

impl TransitionKind {
    pub const COUNT: usize = 6;
    pub const ALL: [TransitionKind; 6] = [
        TransitionKind::None,
        TransitionKind::LastCervical,
        TransitionKind::FirstThoracic,
        TransitionKind::LastThoracic,
        TransitionKind::FirstLumbar,
        TransitionKind::LastLumbar,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Which transition kinds a vertebra labelled `label` fulfils, given the label
/// of its path successor (`None` at the end of the path).
///
/// - LastCervical: label is C7.
/// - FirstThoracic: label is T1.
/// - LastThoracic: label is thoracic and the successor is lumbar.
/// - FirstLumbar: label is L1.
/// - LastLumbar: label is lumbar and it is the last vertebra of the path.
/// - None: none of the above.
///
/// Indexed by [`TransitionKind::index`].
pub fn fulfilled_transitions(label: RawLabel, next: Option<RawLabel>) -> [bool; 6] {
    fulfilled_for(label, Successor::of(next))
}

/// The only property of a path successor the transition rules look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Successor {
    Terminal,
    NonLumbar,
    Lumbar,
}

impl Successor {
    pub const ALL: [Successor; 3] = [Successor::Terminal, Successor::NonLumbar, Successor::Lumbar];

    pub fn of(next: Option<RawLabel>) -> Self {
        match next {
            None => Successor::Terminal,
            Some(l) if l.region() == Region::Lumbar => Successor::Lumbar,
            Some(_) => Successor::NonLumbar,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// [`fulfilled_transitions`] keyed by successor class.
pub fn fulfilled_for(label: RawLabel, next: Successor) -> [bool; 6] {
    let region = label.region();
    let mut out = [false; 6];
    out[TransitionKind::LastCervical.index()] = label == RawLabel::C7;
    out[TransitionKind::FirstThoracic.index()] = label == RawLabel::T1;
    out[TransitionKind::LastThoracic.index()] =
        region == Region::Thoracic && next == Successor::Lumbar;
    out[TransitionKind::FirstLumbar.index()] = label == RawLabel::L1;
    out[TransitionKind::LastLumbar.index()] =
        region == Region::Lumbar && next == Successor::Terminal;
    out[TransitionKind::None.index()] = !out[1..].iter().any(|&f| f);
    out
}

/// Anomaly budget consumed by a path (or path prefix).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct AnomalyFlags {
    pub t12_double: bool,
    pub l5_double: bool,
    pub t11_skip: bool,
}

impl AnomalyFlags {
    /// Thoracic enumeration anomaly: 13 (doubled T12) or 11 (T11 -> L1) thoracic vertebrae.
    pub fn tea(self) -> bool {
        self.t12_double || self.t11_skip
    }

    /// Lumbar enumeration anomaly visible to the solver (doubled L5).
    pub fn lea(self) -> bool {
        self.l5_double
    }

    /// Number of anomaly categories present (0, 1 or 2).
    pub fn categories(self) -> u8 {
        self.tea() as u8 + self.lea() as u8
    }

    pub fn count(self) -> u8 {
        self.t12_double as u8 + self.l5_double as u8 + self.t11_skip as u8
    }

    pub(crate) fn bits(self) -> usize {
        self.t12_double as usize | (self.l5_double as usize) << 1 | (self.t11_skip as usize) << 2
    }
}

/// How one path element follows the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    /// Index increases by one.
    Next,
    /// T12 repeated (encodes T13).
    DoubleT12,
    /// L5 repeated (encodes L6).
    DoubleL5,
    /// T11 directly followed by L1 (eleven thoracic vertebrae).
    SkipT12,
    /// Index increases by `skipped + 1`; only when gaps are allowed.
    Gap { skipped: u8 },
}

impl Step {
    pub fn gap_width(self) -> u8 {
        match self {
            Step::Gap { skipped } => skipped,
            _ => 0,
        }
    }
}

/// Calls `f(next_label, step, flags_after)` for every label allowed to follow
/// `label` when the path so far has consumed `flags`.
///
/// With gaps allowed, T11 -> L1 is offered twice: once as the anomaly step and
/// once as a gap of width one.
pub fn for_each_successor(
    label: RawLabel,
    flags: AnomalyFlags,
    gaps_allowed: bool,
    mut f: impl FnMut(RawLabel, Step, AnomalyFlags),
) {
    if let Some(next) = label.succ() {
        f(next, Step::Next, flags);
    }
    match label {
        RawLabel::T12 if !flags.t12_double && !flags.t11_skip => f(
            RawLabel::T12,
            Step::DoubleT12,
            AnomalyFlags {
                t12_double: true,
                ..flags
            },
        ),
        RawLabel::L5 if !flags.l5_double => f(
            RawLabel::L5,
            Step::DoubleL5,
            AnomalyFlags {
                l5_double: true,
                ..flags
            },
        ),
        RawLabel::T11 if !flags.t11_skip && !flags.t12_double => f(
            RawLabel::L1,
            Step::SkipT12,
            AnomalyFlags {
                t11_skip: true,
                ..flags
            },
        ),
        _ => {}
    }
    if gaps_allowed {
        for target in label.index() + 2..RawLabel::COUNT {
            let skipped = (target - label.index() - 1) as u8;
            f(RawLabel::ALL[target], Step::Gap { skipped }, flags);
        }
    }
}

/// A candidate label sequence over raw labels, with one gap marker per step.
///
/// Construction only checks shape; anatomical validity is checked by
/// [`validate_sequence`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawPath {
    labels: Vec<RawLabel>,
    gaps: Vec<u8>,
    flags: AnomalyFlags,
}

fn infer_flags(labels: &[RawLabel], gaps: &[u8]) -> AnomalyFlags {
    let mut flags = AnomalyFlags::default();
    for (k, w) in labels.windows(2).enumerate() {
        match (w[0], w[1]) {
            (RawLabel::T12, RawLabel::T12) => flags.t12_double = true,
            (RawLabel::L5, RawLabel::L5) => flags.l5_double = true,
            (RawLabel::T11, RawLabel::L1) if gaps[k] == 0 => flags.t11_skip = true,
            _ => {}
        }
    }
    flags
}

impl RawPath {
    /// `gaps[k]` is the number of labels skipped between `labels[k]` and `labels[k + 1]`.
    pub fn new(labels: Vec<RawLabel>, gaps: Vec<u8>) -> Result<Self, LabelError> {
        if labels.is_empty() {
            return Err(LabelError::EmptyPath);
        }
        if gaps.len() != labels.len() - 1 {
            return Err(LabelError::GapMarkerLength {
                expected: labels.len() - 1,
                found: gaps.len(),
            });
        }
        let flags = infer_flags(&labels, &gaps);
        Ok(Self {
            labels,
            gaps,
            flags,
        })
    }

    /// Overwrites the path in place, reusing its buffers. Shapes must agree.
    pub(crate) fn refill(&mut self, labels: &[RawLabel], gaps: &[u8]) {
        debug_assert_eq!(gaps.len() + 1, labels.len());
        self.labels.clear();
        self.labels.extend_from_slice(labels);
        self.gaps.clear();
        self.gaps.extend_from_slice(gaps);
        self.flags = infer_flags(labels, gaps);
    }

    /// Path without gap markers.
    pub fn from_labels(labels: Vec<RawLabel>) -> Result<Self, LabelError> {
        let n = labels.len().saturating_sub(1);
        Self::new(labels, vec![0; n])
    }

    pub fn labels(&self) -> &[RawLabel] {
        &self.labels
    }

    pub fn gaps(&self) -> &[u8] {
        &self.gaps
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn flags(&self) -> AnomalyFlags {
        self.flags
    }

    pub fn used_t12_double(&self) -> bool {
        self.flags.t12_double
    }

    pub fn used_l5_double(&self) -> bool {
        self.flags.l5_double
    }

    pub fn used_t11_skip(&self) -> bool {
        self.flags.t11_skip
    }

    /// Total number of labels skipped by gap steps.
    pub fn skipped_labels(&self) -> u32 {
        self.gaps.iter().map(|&g| g as u32).sum()
    }

    pub fn into_labels(self) -> Vec<RawLabel> {
        self.labels
    }
}

/// A single broken constraint reported by [`validate_sequence`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Label index decreases between `position` and `position + 1`.
    SpatialOrder {
        position: usize,
        from: RawLabel,
        to: RawLabel,
    },
    /// A label other than T12/L5 repeats.
    RepeatedLabel {
        position: usize,
        label: RawLabel,
    },
    /// Index jumps by more than one without a matching gap marker.
    NonConsecutive {
        position: usize,
        from: RawLabel,
        to: RawLabel,
    },
    /// A gap step in a path evaluated with gaps disallowed.
    GapNotAllowed {
        position: usize,
    },
    /// Gap marker disagrees with the index difference.
    GapMarkerMismatch {
        position: usize,
        expected: u8,
        found: u8,
    },
    /// T12 doubled more than once.
    T12DoubleRepeated,
    /// L5 doubled more than once.
    L5DoubleRepeated,
    /// Both a doubled T12 and a T11 -> L1 step.
    SkipWithDouble,
    TooManyCervical {
        count: usize,
    },
    TooManyThoracic {
        count: usize,
        max: usize,
    },
    TooManyLumbar {
        count: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SpatialOrder { position, from, to } => {
                write!(f, "spatial order broken at {position}: {from} then {to}")
            }
            Violation::RepeatedLabel { position, label } => {
                write!(f, "label {label} repeated at {position}")
            }
            Violation::NonConsecutive { position, from, to } => {
                write!(f, "non-consecutive step at {position}: {from} then {to}")
            }
            Violation::GapNotAllowed { position } => {
                write!(f, "gap at {position} but gaps are disabled")
            }
            Violation::GapMarkerMismatch {
                position,
                expected,
                found,
            } => write!(
                f,
                "gap marker at {position} is {found}, expected {expected}"
            ),
            Violation::T12DoubleRepeated => f.write_str("T12 doubled more than once"),
            Violation::L5DoubleRepeated => f.write_str("L5 doubled more than once"),
            Violation::SkipWithDouble => f.write_str("T11 -> L1 skip combined with a doubled T12"),
            Violation::TooManyCervical { count } => write!(f, "{count} cervical vertebrae (max 7)"),
            Violation::TooManyThoracic { count, max } => {
                write!(f, "{count} thoracic vertebrae (max {max})")
            }
            Violation::TooManyLumbar { count } => write!(f, "{count} lumbar vertebrae (max 6)"),
        }
    }
}

/// Returns every anatomical constraint the path breaks; empty means valid.
///
/// Only upper bounds on region counts are checked: a path that ends inside a
/// region is a legal field-of-view truncation.
pub fn validate_sequence(path: &RawPath, gaps_allowed: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    let (mut t12_doubles, mut l5_doubles, mut skips) = (0usize, 0usize, 0usize);

    for (position, (w, &marker)) in path.labels.windows(2).zip(&path.gaps).enumerate() {
        let (from, to) = (w[0], w[1]);
        let diff = to.index() as isize - from.index() as isize;
        match diff {
            d if d < 0 => out.push(Violation::SpatialOrder { position, from, to }),
            0 => {
                match from {
                    RawLabel::T12 => t12_doubles += 1,
                    RawLabel::L5 => l5_doubles += 1,
                    label => out.push(Violation::RepeatedLabel { position, label }),
                }
                if marker != 0 {
                    out.push(Violation::GapMarkerMismatch {
                        position,
                        expected: 0,
                        found: marker,
                    });
                }
            }
            1 => {
                if marker != 0 {
                    out.push(Violation::GapMarkerMismatch {
                        position,
                        expected: 0,
                        found: marker,
                    });
                }
            }
            d => {
                let expected = (d - 1) as u8;
                if from == RawLabel::T11 && to == RawLabel::L1 && marker == 0 {
                    skips += 1;
                } else if marker == 0 {
                    out.push(Violation::NonConsecutive { position, from, to });
                } else if !gaps_allowed {
                    out.push(Violation::GapNotAllowed { position });
                } else if marker != expected {
                    out.push(Violation::GapMarkerMismatch {
                        position,
                        expected,
                        found: marker,
                    });
                }
            }
        }
    }

    if t12_doubles > 1 {
        out.push(Violation::T12DoubleRepeated);
    }
    if l5_doubles > 1 {
        out.push(Violation::L5DoubleRepeated);
    }
    if skips > 0 && t12_doubles > 0 {
        out.push(Violation::SkipWithDouble);
    }

    let mut counts = [0usize; 3];
    for label in &path.labels {
        counts[label.region().index()] += 1;
    }
    if counts[0] > 7 {
        out.push(Violation::TooManyCervical { count: counts[0] });
    }
    let max_thoracic = if skips > 0 { 11 } else { 13 };
    if counts[1] > max_thoracic {
        out.push(Violation::TooManyThoracic {
            count: counts[1],
            max: max_thoracic,
        });
    }
    if counts[2] > 6 {
        out.push(Violation::TooManyLumbar { count: counts[2] });
    }
    out
}

/// Rewrites the second T12 of a double as T13 and the second L5 as L6.
pub fn decode_anomalies(path: &RawPath) -> Result<Vec<FinalLabel>, LabelError> {
    let violations = validate_sequence(path, true);
    if !violations.is_empty() {
        return Err(LabelError::InvalidPath(violations));
    }
    let labels = path.labels();
    Ok(labels
        .iter()
        .enumerate()
        .map(
            |(i, &label)| match (i.checked_sub(1).map(|p| labels[p]), label) {
                (Some(RawLabel::T12), RawLabel::T12) => FinalLabel::T13,
                (Some(RawLabel::L5), RawLabel::L5) => FinalLabel::L6,
                (_, label) => FinalLabel::from_raw(label),
            },
        )
        .collect())
}

/// Inverse of [`decode_anomalies`]: T13 and L6 become the second element of a
/// double, T11 -> L1 becomes the anomaly step and any other jump becomes a gap.
pub fn encode_final(labels: &[FinalLabel]) -> Result<RawPath, LabelError> {
    let raw: Vec<RawLabel> = labels.iter().map(|l| l.encode()).collect();
    let gaps = raw
        .windows(2)
        .map(|w| {
            let d = w[1].index() as isize - w[0].index() as isize;
            if d >= 2 && !(w[0] == RawLabel::T11 && w[1] == RawLabel::L1) {
                (d - 1) as u8
            } else {
                0
            }
        })
        .collect();
    RawPath::new(raw, gaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use RawLabel::*;

    fn path(labels: &[RawLabel]) -> RawPath {
        RawPath::from_labels(labels.to_vec()).unwrap()
    }

    fn finals(names: &[&str]) -> Vec<FinalLabel> {
        names.iter().map(|n| n.parse().unwrap()).collect()
    }

    #[test]
    fn region_partition_boundaries() {
        assert_eq!(region_of(C1), Region::Cervical);
        assert_eq!(region_of(C7), Region::Cervical);
        assert_eq!(region_of(T1), Region::Thoracic);
        assert_eq!(region_of(T12), Region::Thoracic);
        assert_eq!(region_of(L1), Region::Lumbar);
        assert_eq!(region_of(L5), Region::Lumbar);
        for region in Region::ALL {
            for i in region.labels() {
                assert_eq!(RawLabel::ALL[i].region(), region);
            }
        }
    }

    #[test]
    fn final_label_encoding() {
        assert_eq!(FinalLabel::T13.encode(), T12);
        assert_eq!(FinalLabel::L6.encode(), L5);
        assert_eq!(FinalLabel::L1.encode(), L1);
        for raw in RawLabel::ALL {
            assert_eq!(FinalLabel::from_raw(raw).encode(), raw);
            assert_eq!(FinalLabel::from_raw(raw).name(), raw.name());
        }
        assert_eq!("t13".parse::<FinalLabel>().unwrap(), FinalLabel::T13);
        assert!("S1".parse::<FinalLabel>().is_err());
    }

    #[test]
    fn decode_thirteen_thoracic() {
        let decoded = decode_anomalies(&path(&[T11, T12, T12, L1])).unwrap();
        assert_eq!(decoded, finals(&["T11", "T12", "T13", "L1"]));
    }

    #[test]
    fn decode_plain_and_six_lumbar() {
        let decoded = decode_anomalies(&path(&[T11, T12, L1, L2])).unwrap();
        assert_eq!(decoded, finals(&["T11", "T12", "L1", "L2"]));
        let decoded = decode_anomalies(&path(&[L4, L5, L5])).unwrap();
        assert_eq!(decoded, finals(&["L4", "L5", "L6"]));
    }

    #[test]
    fn decode_rejects_invalid() {
        assert!(matches!(
            decode_anomalies(&path(&[T6, T5])),
            Err(LabelError::InvalidPath(_))
        ));
    }

    #[test]
    fn validate_examples() {
        assert!(validate_sequence(&path(&[T5, T6, T7]), false).is_empty());
        assert_eq!(
            validate_sequence(&path(&[T6, T5]), false),
            vec![Violation::SpatialOrder {
                position: 0,
                from: T6,
                to: T5
            }]
        );
        assert_eq!(
            validate_sequence(&path(&[T12, T12, T12]), false),
            vec![Violation::T12DoubleRepeated]
        );
        assert_eq!(
            validate_sequence(&path(&[L5, L5, L5]), false),
            vec![Violation::L5DoubleRepeated]
        );
    }

    #[test]
    fn validate_gaps() {
        let gapped = RawPath::new(vec![T5, T7, T8], vec![1, 0]).unwrap();
        assert!(validate_sequence(&gapped, true).is_empty());
        assert_eq!(
            validate_sequence(&gapped, false),
            vec![Violation::GapNotAllowed { position: 0 }]
        );
        let unmarked = path(&[T5, T7]);
        assert!(matches!(
            validate_sequence(&unmarked, true)[..],
            [Violation::NonConsecutive { .. }]
        ));
        let wrong = RawPath::new(vec![T5, T8], vec![1]).unwrap();
        assert!(matches!(
            validate_sequence(&wrong, true)[..],
            [Violation::GapMarkerMismatch { expected: 2, .. }]
        ));
        // T11 -> L1 with marker 1 is a gap, not the anomaly step.
        let gap_skip = RawPath::new(vec![T11, L1], vec![1]).unwrap();
        assert!(!gap_skip.used_t11_skip());
        assert!(validate_sequence(&gap_skip, true).is_empty());
        assert!(!validate_sequence(&gap_skip, false).is_empty());
    }

    #[test]
    fn validate_repeats_and_counts() {
        assert!(matches!(
            validate_sequence(&path(&[T5, T5]), false)[..],
            [Violation::RepeatedLabel { label: T5, .. }]
        ));
        let full: Vec<RawLabel> = RawLabel::ALL.to_vec();
        assert!(validate_sequence(&path(&full), false).is_empty());
        let mut thirteen = full.clone();
        thirteen.insert(19, T12);
        thirteen.push(L5);
        let p = path(&thirteen);
        assert!(p.used_t12_double() && p.used_l5_double());
        assert!(validate_sequence(&p, false).is_empty());
        let mut eleven = full.clone();
        eleven.remove(18);
        let p = path(&eleven);
        assert!(p.used_t11_skip());
        assert!(validate_sequence(&p, false).is_empty());
    }

    #[test]
    fn single_vertebra_is_valid() {
        for label in RawLabel::ALL {
            let p = path(&[label]);
            assert!(validate_sequence(&p, false).is_empty());
            assert_eq!(p.flags(), AnomalyFlags::default());
        }
    }

    #[test]
    fn transition_rules() {
        let f = fulfilled_transitions;
        assert!(f(C7, Some(T1))[TransitionKind::LastCervical.index()]);
        assert!(f(T1, Some(T2))[TransitionKind::FirstThoracic.index()]);
        assert!(f(T12, Some(L1))[TransitionKind::LastThoracic.index()]);
        assert!(f(T11, Some(L1))[TransitionKind::LastThoracic.index()]);
        assert!(!f(T12, Some(T12))[TransitionKind::LastThoracic.index()]);
        assert!(!f(T12, None)[TransitionKind::LastThoracic.index()]);
        assert!(f(T12, None)[TransitionKind::None.index()]);
        let l1_end = f(L1, None);
        assert!(l1_end[TransitionKind::FirstLumbar.index()]);
        assert!(l1_end[TransitionKind::LastLumbar.index()]);
        assert!(!l1_end[TransitionKind::None.index()]);
        assert!(f(L2, Some(L3))[TransitionKind::None.index()]);
        assert!(!f(L2, Some(L3))[TransitionKind::LastLumbar.index()]);
    }

    #[test]
    fn successors_without_gaps() {
        let mut seen = Vec::new();
        for_each_successor(T11, AnomalyFlags::default(), false, |l, s, _| {
            seen.push((l, s))
        });
        assert_eq!(seen, vec![(T12, Step::Next), (L1, Step::SkipT12)]);
        seen.clear();
        let used = AnomalyFlags {
            t12_double: true,
            ..Default::default()
        };
        for_each_successor(T12, used, false, |l, s, _| seen.push((l, s)));
        assert_eq!(seen, vec![(L1, Step::Next)]);
        seen.clear();
        for_each_successor(L5, AnomalyFlags::default(), false, |l, s, _| {
            seen.push((l, s))
        });
        assert_eq!(seen, vec![(L5, Step::DoubleL5)]);
    }

    #[test]
    fn successors_with_gaps_offer_both_t11_edges() {
        let mut to_l1 = Vec::new();
        for_each_successor(T11, AnomalyFlags::default(), true, |l, s, _| {
            if l == L1 {
                to_l1.push(s)
            }
        });
        assert_eq!(to_l1, vec![Step::SkipT12, Step::Gap { skipped: 1 }]);
    }

    #[test]
    fn encode_final_recovers_gaps() {
        let p = encode_final(&finals(&["T5", "T7", "T11", "L1"])).unwrap();
        assert_eq!(p.gaps(), &[1, 3, 0]);
        assert!(p.used_t11_skip());
    }
}
