#![allow(dead_code)]

use rand::Rng;
use vertlabel::{NormConfig, Normalization, Outputs, Scores, SolverConfig, Subject};

/// Random softmax of length `N` with a random extra peak on one entry.
pub fn softmax<const N: usize, R: Rng>(rng: &mut R) -> [f64; N] {
    let peak = rng.gen_range(0.0..4.0);
    let mut v = [0.0; N];
    for x in v.iter_mut() {
        *x = rng.gen::<f64>().powi(3);
    }
    let hot = rng.gen_range(0..N);
    v[hot] += peak;
    let total: f64 = v.iter().sum();
    v.map(|x| x / total)
}

pub fn random_subject<R: Rng>(rng: &mut R, n: usize) -> Subject {
    let vertebrae = (0..n)
        .map(|_| Scores {
            label_scores: softmax(rng),
            region_scores: softmax(rng),
            transition_scores: softmax(rng),
            visibility: rng.gen_range(0.05..=1.0),
        })
        .collect();
    Subject {
        subject_id: "random".into(),
        vertebrae,
        reference_labels: None,
    }
}

pub fn random_norm_config<R: Rng>(rng: &mut R) -> Normalization {
    NormConfig {
        gaussian_sigma: [0.0, 0.5, 1.0, 2.0][rng.gen_range(0..4)],
        enable_smoothing: rng.gen(),
        transition_column_norm: rng.gen(),
    }
}

pub fn random_outputs<R: Rng>(rng: &mut R, n: usize) -> Outputs {
    let subject = random_subject(rng, n);
    vertlabel::normalize_outputs(&subject, &random_norm_config(rng))
}

pub fn random_solver_config<R: Rng>(rng: &mut R, gaps: bool) -> SolverConfig<f64> {
    SolverConfig {
        w_label: rng.gen_range(0.0..2.0),
        w_region: rng.gen_range(0.0..2.0),
        w_transition: rng.gen_range(0.0..2.0),
        anomaly_gamma: rng.gen_range(-1.5..1.5),
        gaps_enabled: gaps,
        gap_penalty: rng.gen_range(0.0..1.5),
        include_none_transition: rng.gen(),
    }
}
