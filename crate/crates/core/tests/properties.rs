mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vertlabel::label_space::{for_each_successor, AnomalyFlags};
use vertlabel::solver::{count_valid_paths, for_each_valid_path};
use vertlabel::synthgen::{
    crop_fov, emit_classifier_outputs, generate_spine_with, inject_gap, subject_rng, NoiseConfig,
    SpineShape, SynthConfig,
};
use vertlabel::{
    decode_anomalies, encode_final, normalize_outputs, solve, solve_bruteforce, solve_subject,
    validate_sequence, Config, Config32, FinalLabel, Normalization, Normalization32, RawLabel,
    RawPath, Scores, Subject, Subject32,
};

/// Random walk over the successor relation.
fn random_path(rng: &mut ChaCha8Rng, n: usize, gaps: bool) -> Option<RawPath> {
    let mut label = RawLabel::ALL[rng.gen_range(0..RawLabel::COUNT)];
    let mut flags = AnomalyFlags::default();
    let (mut labels, mut markers) = (vec![label], Vec::new());
    while labels.len() < n {
        let mut options = Vec::new();
        for_each_successor(label, flags, gaps, |to, step, after| {
            options.push((to, step, after))
        });
        if options.is_empty() {
            return None;
        }
        let (to, step, after) = options[rng.gen_range(0..options.len())];
        labels.push(to);
        markers.push(step.gap_width());
        label = to;
        flags = after;
    }
    Some(RawPath::new(labels, markers).unwrap())
}

#[test]
fn path_counts_match_enumeration() {
    // Two-vertebra chains: 23 consecutive steps, the T12 and L5 doubles, and T11 -> L1.
    let off = Config::default();
    let on = Config {
        gaps_enabled: true,
        ..Config::default()
    };
    let frozen_off = [24u128, 26, 27, 28, 29, 30, 31, 31];
    let frozen_on = [24u128, 279, 2091, 11344, 47418, 158712];
    for (n, &want) in (1..).zip(&frozen_off) {
        assert_eq!(count_valid_paths(n, &off), want, "n={n}");
        let mut enumerated = 0u128;
        for_each_valid_path(n, false, |_, _| enumerated += 1);
        assert_eq!(enumerated, want, "n={n}");
    }
    for (n, &want) in (1..).zip(&frozen_on) {
        assert_eq!(count_valid_paths(n, &on), want, "n={n}");
        let mut enumerated = 0u128;
        for_each_valid_path(n, true, |_, _| enumerated += 1);
        assert_eq!(enumerated, want, "n={n}");
    }
    // The only 26-vertebra chain is the full spine with both doubles.
    assert_eq!(count_valid_paths(26, &off), 1);
    assert_eq!(count_valid_paths(27, &on), 0);
    assert_eq!(count_valid_paths(24, &off), 6);
}

#[test]
fn every_enumerated_path_validates() {
    for gaps in [false, true] {
        for n in 1..=4 {
            for_each_valid_path(n, gaps, |labels, markers| {
                let p = RawPath::new(labels.to_vec(), markers.to_vec()).unwrap();
                assert!(
                    validate_sequence(&p, gaps).is_empty(),
                    "{labels:?} {markers:?}"
                );
            });
        }
    }
}

#[test]
fn uniform_scores_are_deterministic_and_oracle_consistent() {
    // Frozen after cross-checking against the brute force below.
    let expected = [
        (1, "L1"),
        (2, "T11 L1"),
        (4, "T9 T10 T11 L1"),
        (8, "T5 T6 T7 T8 T9 T10 T11 L1"),
    ];
    for (n, names) in expected {
        let subject = Subject {
            subject_id: "uniform".into(),
            vertebrae: vec![Scores::uniform(); n],
            reference_labels: None,
        };
        let norm = normalize_outputs(&subject, &Normalization::default());
        let cfg = Config::default();
        let dp = solve(&norm, &cfg).unwrap();
        let want: Vec<FinalLabel> = names.split(' ').map(|s| s.parse().unwrap()).collect();
        assert_eq!(dp.final_labels, want);
        assert_eq!(solve_bruteforce(&norm, &cfg).unwrap().final_labels, want);
    }
}

#[test]
fn dropout_everywhere_gives_the_uniform_answer() {
    let noise = NoiseConfig {
        head_dropout: 1.0,
        seed: 4,
        ..NoiseConfig::noiseless()
    };
    let truth = SpineShape::NORMAL.labels()[3..9].to_vec();
    let a: Subject = emit_classifier_outputs(&truth, &noise, "a").unwrap();
    let b: Subject =
        emit_classifier_outputs(&truth, &NoiseConfig { seed: 5, ..noise }, "b").unwrap();
    assert!(a.vertebrae.iter().all(|v| v.vertebrae_is_uniform()));
    let ra = solve_subject(&a, &Normalization::default(), &Config::default()).unwrap();
    let rb = solve_subject(&b, &Normalization::default(), &Config::default()).unwrap();
    assert_eq!(ra.final_labels, rb.final_labels);
}

trait UniformCheck {
    fn vertebrae_is_uniform(&self) -> bool;
}

impl UniformCheck for Scores {
    fn vertebrae_is_uniform(&self) -> bool {
        let u = Scores::uniform();
        self.label_scores == u.label_scores
            && self.region_scores == u.region_scores
            && self.transition_scores == u.transition_scores
    }
}

#[test]
fn confusion_is_overcome_by_transition_head() {
    let truth = SpineShape {
        thoracic: 13,
        lumbar: 5,
    }
    .labels();
    let window = &truth[15..23];
    assert!(window.contains(&FinalLabel::T13));
    for seed in 0..100 {
        let noise = NoiseConfig {
            label_confusion: 0.3,
            seed,
            ..NoiseConfig::noiseless()
        };
        let s: Subject = emit_classifier_outputs(window, &noise, "t13").unwrap();
        let r = solve_subject(&s, &Normalization::default(), &Config::default()).unwrap();
        assert_eq!(r.final_labels, window, "seed {seed}");
    }
}

#[test]
fn interior_gap_is_recovered_and_disabled_gaps_err_on_one_side() {
    let truth = SpineShape::NORMAL.labels();
    let s: Subject = emit_classifier_outputs(&truth, &NoiseConfig::noiseless(), "s").unwrap();
    let s = crop_fov(&s, 9, 8).unwrap(); // T3..T10
    let seed = (0..).find(|&k| inject_gap(&s, k).unwrap().1 == 4).unwrap();
    let (gapped, removed) = inject_gap(&s, seed).unwrap();
    assert_eq!(
        s.reference_labels.as_ref().unwrap()[removed],
        FinalLabel::T7
    );
    let reference = gapped.reference_labels.clone().unwrap();

    let on = Config {
        gaps_enabled: true,
        ..Config::default()
    };
    let r = solve_subject(&gapped, &Normalization::default(), &on).unwrap();
    assert_eq!(r.final_labels, reference);
    assert_eq!(r.raw_path.gaps(), &[0, 0, 0, 1, 0, 0]);

    let r = solve_subject(&gapped, &Normalization::default(), &Config::default()).unwrap();
    let wrong: Vec<usize> = (0..reference.len())
        .filter(|&i| r.final_labels[i] != reference[i])
        .collect();
    assert!(!wrong.is_empty());
    assert!(
        wrong.iter().all(|&i| i < removed) || wrong.iter().all(|&i| i >= removed),
        "{wrong:?}"
    );
}

#[test]
fn gamma_threshold_matches_brute_force() {
    // On a five-subject noiseless corpus the truth stays optimal on an interval
    // of gamma; solve and the oracle agree at every grid point.
    let truth = SpineShape {
        thoracic: 13,
        lumbar: 6,
    }
    .labels();
    let windows = [(15, 6), (17, 5), (18, 4), (20, 5), (21, 5)];
    let full: Subject = emit_classifier_outputs(&truth, &NoiseConfig::noiseless(), "g").unwrap();
    let mut correct_at = Vec::new();
    for k in -8..=8 {
        let gamma = k as f64 * 0.25;
        let cfg = Config {
            anomaly_gamma: gamma,
            ..Config::default()
        };
        let mut all = true;
        for &(start, len) in &windows {
            let w = crop_fov(&full, start, len).unwrap();
            let norm = normalize_outputs(&w, &Normalization::default());
            let dp = solve(&norm, &cfg).unwrap();
            let bf = solve_bruteforce(&norm, &cfg).unwrap();
            assert_eq!(dp.final_labels, bf.final_labels, "gamma {gamma}");
            all &= Some(&dp.final_labels) == w.reference_labels.as_ref();
        }
        correct_at.push(all);
    }
    assert!(correct_at[8], "truth recovered at gamma 0");
    let first = correct_at.iter().position(|&c| c).unwrap();
    let last = correct_at.iter().rposition(|&c| c).unwrap();
    assert!(
        correct_at[first..=last].iter().all(|&c| c),
        "{correct_at:?}"
    );
    assert!(
        !correct_at[16],
        "large gamma suppresses the anomalies: {correct_at:?}"
    );
    // Frozen from the brute-force sweep: the truth is optimal for gamma in [-1, 0.5].
    assert_eq!((first, last), (4, 10), "{correct_at:?}");
}

#[test]
fn prevalence_converges() {
    let cfg = SynthConfig::default();
    let n = 10_000u64;
    let (mut tea, mut lea) = (0u64, 0u64);
    for index in 0..n {
        let spine = generate_spine_with(&cfg, &mut subject_rng(cfg.seed, index, 0));
        let thoracic = spine
            .iter()
            .filter(|l| l.region() == vertlabel::Region::Thoracic)
            .count();
        let lumbar = spine
            .iter()
            .filter(|l| l.region() == vertlabel::Region::Lumbar)
            .count();
        tea += (thoracic != 12) as u64;
        lea += (lumbar != 5) as u64;
    }
    for (count, rate) in [(tea, cfg.tea_rate), (lea, cfg.lea_rate)] {
        let observed = count as f64 / n as f64;
        let se = (rate * (1.0 - rate) / n as f64).sqrt();
        assert!(
            (observed - rate).abs() < 3.0 * se,
            "observed {observed}, configured {rate}"
        );
    }
}

#[test]
fn single_precision_agrees_on_the_worked_example() {
    let doc = include_str!("../../cli/tests/data/worked_example.jsonl");
    let s64: Subject = vertlabel::parse_subject(doc.trim()).unwrap();
    let s32: Subject32 = vertlabel::parse_subject(doc.trim()).unwrap();
    let r64 = solve_subject(&s64, &Normalization::default(), &Config::default()).unwrap();
    let r32 = solve_subject(&s32, &Normalization32::default(), &Config32::default()).unwrap();
    assert_eq!(r64.final_labels, r32.final_labels);
    assert!((r64.total_cost - r32.total_cost as f64).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decode_encode_round_trip(seed in any::<u64>(), n in 1usize..=8, gaps in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(path) = random_path(&mut rng, n, gaps) {
            let decoded = decode_anomalies(&path).unwrap();
            prop_assert_eq!(decoded.len(), n);
            // A T11 -> L1 gap of one and the skip anomaly decode alike; the encoder picks the anomaly.
            let gap_over_t12 = path.labels().windows(2).zip(path.gaps()).any(|(w, &g)| w == [RawLabel::T11, RawLabel::L1] && g == 1);
            if !gap_over_t12 {
                prop_assert_eq!(encode_final(&decoded).unwrap(), path);
            }
        }
    }

    #[test]
    fn solver_output_is_valid(seed in any::<u64>(), n in 1usize..=26, gaps in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = common::random_outputs(&mut rng, n);
        let cfg = common::random_solver_config(&mut rng, gaps);
        let r = solve(&norm, &cfg).unwrap();
        prop_assert!(validate_sequence(&r.raw_path, gaps).is_empty());
        prop_assert_eq!(&decode_anomalies(&r.raw_path).unwrap(), &r.final_labels);
        let recomputed = vertlabel::pathcost(&r.raw_path, &norm, &vertlabel::build_label_cost(&norm, &cfg), &cfg).unwrap();
        prop_assert!((recomputed - r.total_cost).abs() < 1e-9);
    }

    #[test]
    fn oracle_equivalence_small(seed in any::<u64>(), n in 1usize..=5, gaps in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = common::random_outputs(&mut rng, n);
        let cfg = common::random_solver_config(&mut rng, gaps);
        let dp = solve(&norm, &cfg).unwrap();
        let bf = solve_bruteforce(&norm, &cfg).unwrap();
        prop_assert_eq!(dp.final_labels, bf.final_labels);
        prop_assert!((dp.total_cost - bf.total_cost).abs() < 1e-9);
    }

    #[test]
    fn argmin_is_scale_invariant(seed in any::<u64>(), n in 1usize..=12, factor in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = common::random_outputs(&mut rng, n);
        let mut scaled = norm.clone();
        for row in scaled.c.iter_mut().chain(scaled.r_expanded.iter_mut()) {
            row.iter_mut().for_each(|x| *x *= factor);
        }
        for row in scaled.t.iter_mut() {
            row.iter_mut().for_each(|x| *x *= factor);
        }
        let cfg = Config::default();
        let a = solve(&norm, &cfg).unwrap();
        let b = solve(&scaled, &cfg).unwrap();
        prop_assert_eq!(a.final_labels, b.final_labels);
        prop_assert!((b.total_cost - factor * a.total_cost).abs() < 1e-9 * (1.0 + b.total_cost.abs()));
    }

    #[test]
    fn zero_visibility_vertebra_contributes_nothing(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut norm = common::random_outputs(&mut rng, n);
        let i = rng.gen_range(0..n);
        norm.s[i] = 0.0;
        let cfg = common::random_solver_config(&mut rng, false);
        let cost = vertlabel::build_label_cost(&norm, &cfg);
        let mut other = norm.clone();
        other.c[i] = [0.7; 24];
        other.t[i] = [0.3; 6];
        let other_cost = vertlabel::build_label_cost(&other, &cfg);
        if let Some(path) = random_path(&mut rng, n, false) {
            let a = vertlabel::pathcost(&path, &norm, &cost, &cfg).unwrap();
            let b = vertlabel::pathcost(&path, &other, &other_cost, &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn anomalous_gammas_form_a_lower_interval(seed in any::<u64>(), n in 2usize..=14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = common::random_outputs(&mut rng, n);
        let anomalous: Vec<bool> = (-8..=8)
            .map(|k| {
                let cfg = Config { anomaly_gamma: k as f64 * 0.25, ..Config::default() };
                solve(&norm, &cfg).unwrap().raw_path.flags().count() > 0
            })
            .collect();
        if let Some(first_normal) = anomalous.iter().position(|&a| !a) {
            prop_assert!(anomalous[first_normal..].iter().all(|&a| !a), "{:?}", anomalous);
        }
    }

    #[test]
    fn huge_gap_penalty_matches_gaps_disabled(seed in any::<u64>(), n in 1usize..=16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = common::random_outputs(&mut rng, n);
        let off = Config::default();
        let on = Config { gaps_enabled: true, gap_penalty: 1e6, ..off };
        prop_assert_eq!(solve(&norm, &off).unwrap().raw_path, solve(&norm, &on).unwrap().raw_path);
    }

    #[test]
    fn smoothing_invariants(seed in any::<u64>(), n in 1usize..=12, sigma in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subject = common::random_subject(&mut rng, n);
        let identity = normalize_outputs(&subject, &Normalization::identity());
        let zero_sigma = normalize_outputs(&subject, &Normalization { gaussian_sigma: 0.0, enable_smoothing: true, transition_column_norm: false });
        prop_assert_eq!(&identity, &zero_sigma);

        let smoothed = normalize_outputs(&subject, &Normalization { gaussian_sigma: sigma, enable_smoothing: true, transition_column_norm: false });
        for j in 0..RawLabel::COUNT {
            let before: f64 = identity.c.iter().map(|r| r[j]).sum();
            let after: f64 = smoothed.c.iter().map(|r| r[j]).sum();
            prop_assert!(after <= before + 1e-12);
        }
        for row in smoothed.r_expanded.iter() {
            for region in vertlabel::Region::ALL {
                let block = &row[region.labels()];
                prop_assert!(block.iter().all(|&x| x == block[0]));
            }
        }
        let columns = normalize_outputs(&subject, &Normalization { transition_column_norm: true, ..Normalization::identity() });
        for (a, b) in columns.t.iter().flatten().zip(identity.t.iter().flatten()) {
            prop_assert!(a <= b);
        }
        prop_assert_eq!(&smoothed, &normalize_outputs(&subject, &Normalization { gaussian_sigma: sigma, enable_smoothing: true, transition_column_norm: false }));
        prop_assert_eq!(&identity.s, &subject.vertebrae.iter().map(|v| v.visibility).collect::<Vec<_>>());
    }

    #[test]
    fn json_round_trip(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subject = common::random_subject(&mut rng, n);
        let text = vertlabel::subject_to_json(&subject);
        let back: Subject = vertlabel::parse_subject(&text).unwrap();
        prop_assert_eq!(back, subject);
    }

    #[test]
    fn noiseless_windows_are_recovered(seed in any::<u64>(), start in 0usize..24, len in 2usize..=26) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SynthConfig { tea_rate: 0.5, lea_rate: 0.5, ..SynthConfig::default() };
        let truth = generate_spine_with(&cfg, &mut rng);
        let start = start.min(truth.len() - 2);
        let len = len.min(truth.len() - start);
        let window = &truth[start..start + len];
        prop_assume!(window[0] != FinalLabel::T13 && window[0] != FinalLabel::L6);
        let s: Subject = emit_classifier_outputs(window, &NoiseConfig::noiseless(), "w").unwrap();
        let r = solve_subject(&s, &Normalization::default(), &Config::default()).unwrap();
        prop_assert_eq!(r.final_labels, window);
    }
}
