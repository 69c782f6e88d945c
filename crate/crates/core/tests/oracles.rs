//! Model-free checks that the generator's familiarity gap behaves as a separation knob.

mod common;

use rand::seq::SliceRandom;
use vrfam::data::{make_split, ChannelMode, Session, WindowSet};
use vrfam::eval::{roc, scored};
use vrfam::seed::rng_from_seed;
use vrfam::synth::{path_length, path_variance, synth_dataset, SynthConfig};

fn dataset(delta: f64, users_per_class: usize, sessions_per_code: usize) -> (SynthConfig, Vec<Session>) {
    let cfg = SynthConfig { users_per_class, sessions_per_code, codes: vec!["2648".into()], delta, seed: 17, ..Default::default() };
    let sessions = synth_dataset(&cfg).unwrap();
    (cfg, sessions)
}

/// Per-window path variance and labels.
fn variances<'a>(sessions: impl IntoIterator<Item = &'a Session>) -> (Vec<f64>, Vec<u8>) {
    let set = WindowSet::from_sessions(sessions, 50, ChannelMode::Position).unwrap();
    let v = (0..set.len()).map(|i| path_variance(set.window(i), 3)).collect();
    (v, set.labels().to_vec())
}

/// AUC with "familiar" scored by low path variance.
fn oracle_auc(sessions: &[Session]) -> f64 {
    let (v, labels) = variances(sessions);
    let scores: Vec<f64> = v.iter().map(|x| -x).collect();
    roc(&scored(&scores, &labels)).unwrap().auc
}

#[test]
fn null_gap_path_lengths_are_indistinguishable() {
    let (_, sessions) = dataset(0.0, 100, 1);
    let lengths: Vec<f64> = sessions.iter().map(path_length).collect();
    let labels: Vec<bool> = sessions.iter().map(|s| s.familiar).collect();
    let gap = |labels: &[bool]| {
        let mean = |want: bool| {
            let v: Vec<f64> = lengths.iter().zip(labels).filter(|(_, &l)| l == want).map(|(x, _)| *x).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        (mean(true) - mean(false)).abs()
    };
    let observed = gap(&labels);
    let mut rng = rng_from_seed(5);
    let mut shuffled = labels.clone();
    let permutations = 4000;
    let extreme = (0..permutations)
        .filter(|_| {
            shuffled.shuffle(&mut rng);
            gap(&shuffled) >= observed
        })
        .count();
    let p = (extreme + 1) as f64 / (permutations + 1) as f64;
    assert!(p > 0.01, "permutation p = {p} for a mean gap of {observed}");
}

#[test]
fn null_gap_oracle_auc_is_chance() {
    let (_, sessions) = dataset(0.0, 100, 1);
    let (v, _) = variances(&sessions);
    assert!(v.len() >= 2000);
    let auc = oracle_auc(&sessions);
    assert!((0.45..=0.55).contains(&auc), "AUC {auc}");
}

#[test]
fn oracle_auc_grows_with_the_gap() {
    let aucs: Vec<f64> = [0.0, 1.0, 2.0, 3.0].iter().map(|&d| oracle_auc(&dataset(d, 100, 2).1)).collect();
    let inversions: Vec<f64> = aucs.windows(2).map(|w| w[0] - w[1]).filter(|d| *d > 0.0).collect();
    assert!(inversions.len() <= 1 && inversions.iter().all(|d| *d <= 0.02), "AUCs {aucs:?}");
    assert!(aucs[3] > aucs[0] + 0.3, "AUCs {aucs:?}");
}

#[test]
fn strong_gap_threshold_classifier_generalises_across_users() {
    let (cfg, sessions) = dataset(3.0, 7, 10);
    let split = make_split(&cfg.users(), 7).unwrap();
    let (train_v, train_l) = variances(sessions.iter().filter(|s| split.train_users.contains(&s.user_id)));
    let (test_v, test_l) = variances(sessions.iter().filter(|s| split.test_users.contains(&s.user_id)));
    let acc = |v: &[f64], l: &[u8], thr: f64| {
        v.iter().zip(l).filter(|(x, &y)| (**x <= thr) == (y == 1)).count() as f64 / v.len() as f64
    };
    // Brute-force sweep over every training value as a cut point.
    let mut cuts = train_v.clone();
    cuts.sort_by(f64::total_cmp);
    let best = cuts.iter().copied().max_by(|a, b| acc(&train_v, &train_l, *a).total_cmp(&acc(&train_v, &train_l, *b))).unwrap();
    let test_acc = acc(&test_v, &test_l, best);
    assert!(test_acc >= 0.8, "held-out threshold accuracy {test_acc}");
}

#[test]
fn every_session_covers_the_largest_window() {
    let (_, sessions) = dataset(1.0, 5, 4);
    assert!(sessions.iter().all(|s| s.frames.len() >= 120));
    assert_eq!(common::expected_windows(sessions.iter().map(|s| s.frames.len()), 120), WindowSet::from_sessions(&sessions, 120, ChannelMode::Position).unwrap().len());
}
