use ceg_core::eval::metrics::{self, Confusion, MetricError};
use ceg_core::{Label, NliRelation};
use proptest::prelude::*;

/// Enumerates all 2^n subsets, keeps those a score threshold can produce
/// (upper sets of the score order), and integrates precision over recall steps.
fn brute_force_auc(scores: &[f64], golds: &[Label], positive: Label) -> Option<f64> {
    let n = scores.len();
    let total_pos = golds.iter().filter(|&&g| g == positive).count();
    if total_pos == 0 {
        return None;
    }
    let mut points: Vec<(usize, f64, f64)> = Vec::new();
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let cut = members.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        let is_threshold_set = (0..n).all(|i| (mask & (1 << i) != 0) == (scores[i] >= cut));
        if !is_threshold_set {
            continue;
        }
        let tp = members.iter().filter(|&&i| golds[i] == positive).count();
        points.push((members.len(), tp as f64 / total_pos as f64, tp as f64 / members.len() as f64));
    }
    points.sort_by_key(|p| p.0);
    let mut area = 0.0;
    let mut prev = 0.0;
    for (_, recall, precision) in points {
        area += precision * (recall - prev);
        prev = recall;
    }
    Some(area)
}

fn dataset() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    (1usize..=10).prop_flat_map(|n| {
        (
            prop_oneof![
                prop::collection::vec((0u8..4).prop_map(|s| f64::from(s) / 4.0), n),
                prop::collection::vec(0.0f64..1.0, n),
            ],
            prop::collection::vec(prop_oneof![Just(Label::Factual), Just(Label::Nonfactual)], n),
        )
    })
}

fn flip(l: Label) -> Label {
    match l {
        Label::Factual => Label::Nonfactual,
        Label::Nonfactual => Label::Factual,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn auc_pr_matches_threshold_enumeration((scores, golds) in dataset()) {
        for positive in [Label::Nonfactual, Label::Factual] {
            match (metrics::auc_pr(&scores, &golds, positive), brute_force_auc(&scores, &golds, positive)) {
                (Ok(got), Some(want)) => {
                    prop_assert!((got - want).abs() <= 1e-12, "{} vs {}", got, want);
                    prop_assert!((0.0..=1.0).contains(&got));
                }
                (Err(MetricError::Undefined(_)), None) => {}
                (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
            }
        }
    }

    #[test]
    fn balanced_accuracy_swap_invariance((_s, golds) in dataset(), preds_seed in prop::collection::vec(any::<bool>(), 10)) {
        let preds: Vec<Label> = golds.iter().zip(&preds_seed).map(|(&g, &keep)| if keep { g } else { flip(g) }).collect();
        let flipped_gold: Vec<Label> = golds.iter().copied().map(flip).collect();
        let flipped_pred: Vec<Label> = preds.iter().copied().map(flip).collect();
        let a = metrics::balanced_accuracy_for(&preds, &golds, Label::Nonfactual);
        let b = metrics::balanced_accuracy_for(&flipped_pred, &flipped_gold, Label::Factual);
        let c = metrics::balanced_accuracy_for(&preds, &golds, Label::Factual);
        match (a, b, c) {
            (Ok(a), Ok(b), Ok(c)) => {
                prop_assert!((a - b).abs() < 1e-15);
                prop_assert!((a - c).abs() < 1e-15);
            }
            (Err(_), Err(_), Err(_)) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn metrics_are_deterministic((scores, golds) in dataset()) {
        prop_assert_eq!(metrics::auc_pr(&scores, &golds, Label::Nonfactual), metrics::auc_pr(&scores, &golds, Label::Nonfactual));
        let preds: Vec<Label> = scores.iter().map(|&s| if s >= 0.5 { Label::Nonfactual } else { Label::Factual }).collect();
        prop_assert_eq!(metrics::balanced_accuracy(&preds, &golds), metrics::balanced_accuracy(&preds, &golds));
        prop_assert_eq!(metrics::accuracy(&preds, &golds), metrics::accuracy(&preds, &golds));
    }

    #[test]
    fn recall_is_monotone_in_k(runs in prop::collection::vec(prop::collection::vec(0u64..20, 0..12), 1..30), seed in any::<u64>()) {
        let golds: Vec<u64> = (0..runs.len() as u64).map(|i| (i * 7 + seed) % 20).collect();
        let mut prev = 0.0;
        for k in 1..=12 {
            let r = metrics::recall_at_k(&runs, &golds, k).unwrap();
            prop_assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn recall_matches_a_counting_loop(runs in prop::collection::vec(prop::collection::vec(0u64..100, 1..10), 100), k in 1usize..10) {
        let golds: Vec<u64> = (0..100).collect();
        let mut hits = 0;
        for i in 0..100 {
            let mut found = false;
            for id in runs[i].iter().take(k) {
                if *id == golds[i] {
                    found = true;
                }
            }
            if found {
                hits += 1;
            }
        }
        prop_assert_eq!(metrics::recall_at_k(&runs, &golds, k).unwrap(), hits as f64 / 100.0);
    }
}

#[test]
fn hand_values() {
    use Label::{Factual as F, Nonfactual as N};
    // TP=1, FN=1, TN=3, FP=1.
    let golds = [N, N, F, F, F, F];
    let preds = [N, F, F, F, F, N];
    assert!((metrics::balanced_accuracy(&preds, &golds).unwrap() - 0.625).abs() < 1e-12);
    let c = Confusion::tally(&preds, &golds, N).unwrap();
    assert_eq!((c.tp, c.fn_, c.tn, c.fp), (1, 1, 3, 1));
    assert_eq!(metrics::balanced_accuracy(&[N, N, N, N, N, N], &golds).unwrap(), 0.5);
    assert!(matches!(metrics::balanced_accuracy(&[N], &[N]), Err(MetricError::Undefined(_))));

    assert_eq!(metrics::auc_pr(&[0.9, 0.8, 0.1, 0.0], &[N, N, F, F], N).unwrap(), 1.0);
    assert!((metrics::auc_pr(&[0.5; 5], &[N, N, F, F, F], N).unwrap() - 0.4).abs() < 1e-12);
    assert!(matches!(metrics::auc_pr(&[0.1], &[F], N), Err(MetricError::Undefined(_))));
    assert!(matches!(metrics::auc_pr(&[f64::NAN], &[N], N), Err(MetricError::NonFinite(0))));
}

#[test]
fn precision_at_k_truth_table() {
    use NliRelation::*;
    let per_doc = vec![
        vec![Supports, Neutral],
        vec![Neutral, Supports],
        vec![Contradicts, Neutral],
        vec![],
    ];
    assert_eq!(metrics::precision_at_k(&per_doc, 1).unwrap(), 0.25);
    assert_eq!(metrics::precision_at_k(&per_doc, 2).unwrap(), 0.5);
    assert_eq!(metrics::precision_at_k(&[vec![Neutral]], 5).unwrap(), 0.0);
}

#[test]
fn recall_gold_absent_contributes_zero() {
    assert_eq!(metrics::recall_at_k(&[vec![1, 2], vec![3]], &[2, 99], 2).unwrap(), 0.5);
}
