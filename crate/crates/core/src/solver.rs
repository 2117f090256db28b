//! Exact minimum-cost label path search.
//!
//! [`solve`] runs a backward dynamic program over states
//! `(vertebra, label, anomaly budget)`. The cost of vertebra `i` depends on its
//! own label and on whether its successor is lumbar or absent (last-thoracic
//! and last-lumbar rewards), so it is charged on the outgoing edge of `i`, or
//! at the terminal state for the last vertebra. Disallowed steps are simply
//! never generated; unreachable states are `None`, never an infinite float.
//!
//! Ties are broken towards the lexicographically smallest raw label sequence,
//! then towards fewer anomaly flags.
//!
//! [`solve_bruteforce`] enumerates every valid path and scores it with
//! [`pathcost`]; it is the reference the dynamic program is tested against.

use std::cmp::Ordering;

use crate::classifier_io::{normalize_outputs, NormConfig, NormalizedOutputs, SubjectRecord};
use crate::cost_model::{build_label_cost, pathcost, CostMatrix, SolverConfig};
use crate::error::SolveError;
use crate::label_space::{
    decode_anomalies, for_each_successor, fulfilled_for, AnomalyFlags, FinalLabel, RawLabel,
    RawPath, Step, Successor, TransitionKind,
};
use crate::scalar::{cast, Scalar};

/// Longest labelable chain: all 24 labels plus the T12 and L5 doubles.
pub const MAX_CHAIN: usize = FinalLabel::COUNT;

/// Largest chain [`solve_bruteforce`] accepts.
pub const BRUTE_FORCE_CAP: usize = 10;

const FLAG_STATES: usize = 8;
const STATES: usize = RawLabel::COUNT * FLAG_STATES;

/// A DP node: the label of one vertebra and the anomaly budget consumed up to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SolverState {
    pub instance: usize,
    pub label: RawLabel,
    pub flags: AnomalyFlags,
}

impl SolverState {
    #[inline]
    fn slot(label: RawLabel, flags: AnomalyFlags) -> usize {
        label.index() * FLAG_STATES + flags.bits()
    }
}

/// The optimal labelling of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult<T> {
    pub raw_path: RawPath,
    pub final_labels: Vec<FinalLabel>,
    pub total_cost: T,
    /// Thirteen (T13) or eleven (T11 -> L1) thoracic vertebrae.
    pub tea_flag: bool,
    /// L6 present. Four-lumbar spines are indistinguishable from a cropped
    /// view here and are only detected at evaluation time.
    pub lea_flag: bool,
}

impl<T: Scalar> PathResult<T> {
    fn from_path(
        raw_path: RawPath,
        norm: &NormalizedOutputs<T>,
        label_cost: &CostMatrix<T>,
        cfg: &SolverConfig<T>,
    ) -> Result<Self, SolveError> {
        let total_cost = pathcost(&raw_path, norm, label_cost, cfg)?;
        let final_labels = decode_anomalies(&raw_path)?;
        let flags = raw_path.flags();
        Ok(Self {
            final_labels,
            total_cost,
            tea_flag: flags.tea(),
            lea_flag: flags.lea(),
            raw_path,
        })
    }

    pub fn is_anomalous(&self) -> bool {
        self.tea_flag || self.lea_flag
    }
}

/// Per-vertebra cost `-s_i * (L[i][j] + transcost)` for every label and successor class.
struct VertebraCosts<T> {
    table: Vec<[[T; 3]; RawLabel::COUNT]>,
}

impl<T: Scalar> VertebraCosts<T> {
    fn new(norm: &NormalizedOutputs<T>, label_cost: &CostMatrix<T>, cfg: &SolverConfig<T>) -> Self {
        let table = (0..norm.len())
            .map(|i| {
                let mut row = [[T::zero(); 3]; RawLabel::COUNT];
                for label in RawLabel::ALL {
                    for succ in Successor::ALL {
                        let fulfilled = fulfilled_for(label, succ);
                        let reward: T = TransitionKind::ALL
                            .iter()
                            .filter(|&&k| fulfilled[k.index()])
                            .filter(|&&k| cfg.include_none_transition || k != TransitionKind::None)
                            .map(|&k| norm.t[i][k.index()])
                            .sum();
                        let agreement = cfg.w_transition * reward + label_cost.get(i, label);
                        row[label.index()][succ.index()] = -(norm.s[i] * agreement);
                    }
                }
                row
            })
            .collect();
        Self { table }
    }

    #[inline]
    fn get(&self, i: usize, label: RawLabel, succ: Successor) -> T {
        self.table[i][label.index()][succ.index()]
    }
}

#[inline]
fn step_cost<T: Scalar>(
    cfg: &SolverConfig<T>,
    before: AnomalyFlags,
    after: AnomalyFlags,
    step: Step,
) -> T {
    let mut extra = T::zero();
    let new_categories = after.categories() - before.categories();
    if new_categories > 0 {
        extra = extra + cfg.anomaly_gamma * cast(new_categories as f64);
    }
    if let Step::Gap { skipped } = step {
        extra = extra + cfg.gap_penalty * cast(skipped as f64);
    }
    extra
}

#[inline]
fn tie_slack<T: Scalar>(best: T) -> T {
    T::tie_tolerance() * best.abs().max(T::one())
}

/// Minimum-cost valid labelling of a normalized chain.
pub fn solve<T: Scalar>(
    norm: &NormalizedOutputs<T>,
    cfg: &SolverConfig<T>,
) -> Result<PathResult<T>, SolveError> {
    let n = norm.len();
    if n == 0 {
        return Err(SolveError::EmptyInput);
    }
    if n > MAX_CHAIN {
        return Err(SolveError::ChainTooLong { n, max: MAX_CHAIN });
    }
    cfg.validate()?;
    let label_cost = build_label_cost(norm, cfg);
    let costs = VertebraCosts::new(norm, &label_cost, cfg);

    // value[i][slot]: best cost of vertebrae i..n given the state at i.
    let mut value: Vec<[Option<T>; STATES]> = vec![[None; STATES]; n];
    for label in RawLabel::ALL {
        let terminal = costs.get(n - 1, label, Successor::Terminal);
        for bits in 0..FLAG_STATES {
            value[n - 1][label.index() * FLAG_STATES + bits] = Some(terminal);
        }
    }
    for i in (0..n - 1).rev() {
        let (head, tail) = value.split_at_mut(i + 1);
        let (here, next) = (&mut head[i], &tail[0]);
        for label in RawLabel::ALL {
            for bits in 0..FLAG_STATES {
                let flags = flags_from_bits(bits);
                let mut best: Option<T> = None;
                for_each_successor(label, flags, cfg.gaps_enabled, |to, step, after| {
                    if let Some(rest) = next[SolverState::slot(to, after)] {
                        let v = costs.get(i, label, Successor::of(Some(to)))
                            + step_cost(cfg, flags, after, step)
                            + rest;
                        if best.is_none_or(|b| v < b) {
                            best = Some(v);
                        }
                    }
                });
                here[label.index() * FLAG_STATES + bits] = best;
            }
        }
    }

    // Start: any label, nothing consumed. Smallest label wins ties.
    let start = AnomalyFlags::default();
    let best_start = RawLabel::ALL
        .iter()
        .filter_map(|&l| value[0][SolverState::slot(l, start)])
        .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.min(v))))
        .ok_or(SolveError::Internal)?;
    let slack = tie_slack(best_start);
    let mut label = RawLabel::ALL
        .into_iter()
        .find(|&l| value[0][SolverState::slot(l, start)].is_some_and(|v| v <= best_start + slack))
        .ok_or(SolveError::Internal)?;
    let mut flags = start;

    let mut labels = Vec::with_capacity(n);
    let mut gaps = Vec::with_capacity(n.saturating_sub(1));
    labels.push(label);
    for i in 0..n - 1 {
        let mut options: Vec<(T, RawLabel, Step, AnomalyFlags)> = Vec::new();
        for_each_successor(label, flags, cfg.gaps_enabled, |to, step, after| {
            if let Some(rest) = value[i + 1][SolverState::slot(to, after)] {
                let v = costs.get(i, label, Successor::of(Some(to)))
                    + step_cost(cfg, flags, after, step)
                    + rest;
                options.push((v, to, step, after));
            }
        });
        let min = options
            .iter()
            .map(|o| o.0)
            .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.min(v))))
            .ok_or(SolveError::Internal)?;
        let slack = tie_slack(min);
        let &(_, to, step, after) = options
            .iter()
            .filter(|o| o.0 <= min + slack)
            .min_by(|a, b| a.1.cmp(&b.1).then(a.3.count().cmp(&b.3.count())))
            .ok_or(SolveError::Internal)?;
        labels.push(to);
        gaps.push(step.gap_width());
        label = to;
        flags = after;
    }

    let path = RawPath::new(labels, gaps)?;
    PathResult::from_path(path, norm, &label_cost, cfg)
}

fn flags_from_bits(bits: usize) -> AnomalyFlags {
    AnomalyFlags {
        t12_double: bits & 1 != 0,
        l5_double: bits & 2 != 0,
        t11_skip: bits & 4 != 0,
    }
}

/// Normalizes a subject's scores and solves it.
pub fn solve_subject<T: Scalar>(
    subject: &SubjectRecord<T>,
    norm_cfg: &NormConfig<T>,
    cfg: &SolverConfig<T>,
) -> Result<PathResult<T>, SolveError> {
    solve(&normalize_outputs(subject, norm_cfg), cfg)
}

/// Exhaustive search with the same tie-breaking as [`solve`]; refuses chains
/// longer than [`BRUTE_FORCE_CAP`].
pub fn solve_bruteforce<T: Scalar>(
    norm: &NormalizedOutputs<T>,
    cfg: &SolverConfig<T>,
) -> Result<PathResult<T>, SolveError> {
    solve_bruteforce_capped(norm, cfg, BRUTE_FORCE_CAP)
}

pub fn solve_bruteforce_capped<T: Scalar>(
    norm: &NormalizedOutputs<T>,
    cfg: &SolverConfig<T>,
    cap: usize,
) -> Result<PathResult<T>, SolveError> {
    let n = norm.len();
    if n == 0 {
        return Err(SolveError::EmptyInput);
    }
    if n > cap {
        return Err(SolveError::TooLarge { n, cap });
    }
    cfg.validate()?;
    let label_cost = build_label_cost(norm, cfg);

    let mut best: Option<(T, RawPath)> = None;
    let mut scratch = RawPath::from_labels(vec![RawLabel::C1; n])?;
    let mut first_error = None;
    for_each_valid_path(n, cfg.gaps_enabled, |labels, gaps| {
        scratch.refill(labels, gaps);
        let cost = match pathcost(&scratch, norm, &label_cost, cfg) {
            Ok(c) => c,
            Err(e) => {
                first_error.get_or_insert(SolveError::from(e));
                return;
            }
        };
        let better = match &best {
            None => true,
            Some((b, bp)) => compare_candidates(cost, &scratch, *b, bp) == Ordering::Less,
        };
        if better {
            best = Some((cost, scratch.clone()));
        }
    });
    if let Some(e) = first_error {
        return Err(e);
    }
    let (_, path) = best.ok_or(SolveError::Internal)?;
    PathResult::from_path(path, norm, &label_cost, cfg)
}

fn compare_candidates<T: Scalar>(
    cost: T,
    path: &RawPath,
    best: T,
    best_path: &RawPath,
) -> Ordering {
    let slack = tie_slack(best);
    if cost < best - slack {
        return Ordering::Less;
    }
    if cost > best + slack {
        return Ordering::Greater;
    }
    path.labels()
        .cmp(best_path.labels())
        .then(path.flags().count().cmp(&best_path.flags().count()))
}

/// Depth-first enumeration of every valid raw path of length `n`, reporting
/// labels and gap markers.
pub fn for_each_valid_path(
    n: usize,
    gaps_allowed: bool,
    mut visit: impl FnMut(&[RawLabel], &[u8]),
) {
    fn extend(
        n: usize,
        gaps_allowed: bool,
        labels: &mut Vec<RawLabel>,
        gaps: &mut Vec<u8>,
        flags: AnomalyFlags,
        visit: &mut dyn FnMut(&[RawLabel], &[u8]),
    ) {
        if labels.len() == n {
            visit(labels, gaps);
            return;
        }
        let last = *labels.last().expect("non-empty prefix");
        for_each_successor(last, flags, gaps_allowed, |to, step, after| {
            labels.push(to);
            gaps.push(step.gap_width());
            extend(n, gaps_allowed, labels, gaps, after, visit);
            labels.pop();
            gaps.pop();
        });
    }

    if n == 0 {
        return;
    }
    let mut labels = Vec::with_capacity(n);
    let mut gaps = Vec::with_capacity(n);
    for start in RawLabel::ALL {
        labels.push(start);
        extend(
            n,
            gaps_allowed,
            &mut labels,
            &mut gaps,
            AnomalyFlags::default(),
            &mut visit,
        );
        labels.pop();
    }
}

/// Number of distinct valid raw paths of length `n` (start label free).
pub fn count_valid_paths<T: Scalar>(n: usize, cfg: &SolverConfig<T>) -> u128 {
    if n == 0 {
        return 0;
    }
    let mut counts = [0u128; STATES];
    for label in RawLabel::ALL {
        counts[SolverState::slot(label, AnomalyFlags::default())] = 1;
    }
    for _ in 1..n {
        let mut next = [0u128; STATES];
        for label in RawLabel::ALL {
            for bits in 0..FLAG_STATES {
                let c = counts[label.index() * FLAG_STATES + bits];
                if c == 0 {
                    continue;
                }
                for_each_successor(
                    label,
                    flags_from_bits(bits),
                    cfg.gaps_enabled,
                    |to, _, after| {
                        next[SolverState::slot(to, after)] += c;
                    },
                );
            }
        }
        counts = next;
    }
    counts.iter().sum()
}
