use std::collections::BTreeSet;

use flowvae::eval::*;
use flowvae::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scores rounded to two decimals so that ties are common.
fn random_set(n: usize, seed: u64) -> LabeledScores {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let pos = rng.random_bool(0.3);
        let s: f64 = rng.random::<f64>() + if pos { 0.3 } else { 0.0 };
        scores.push((s * 20.0).round() / 20.0);
        labels.push(pos);
    }
    LabeledScores::new(scores, labels).unwrap()
}

/// P(score of a positive > score of a negative), ties counted half.
fn pair_count_auroc(ls: &LabeledScores) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in ls.labels().iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in ls.labels().iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            let (a, b) = (ls.scores()[i], ls.scores()[j]);
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Precision and recall at every distinct threshold, predicting positive for
/// score >= threshold, summed as recall increments times precision.
fn exhaustive_ap(ls: &LabeledScores) -> f64 {
    let mut thresholds: Vec<f64> = ls.scores().to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let p = ls.positives() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&s, &l) in ls.scores().iter().zip(ls.labels()) {
            if s >= t {
                if l {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / p;
        if tp > 0.0 {
            ap += (recall - prev_recall) * tp / (tp + fp);
        }
        prev_recall = recall;
    }
    ap
}

#[test]
fn auroc_matches_pair_counting() {
    for seed in 0..5 {
        let ls = random_set(200, seed);
        let a = auroc(&ls).unwrap();
        assert!((a - pair_count_auroc(&ls)).abs() < 1e-9, "seed {seed}");
    }
}

#[test]
fn auprc_matches_threshold_enumeration() {
    for seed in 0..5 {
        for n in [100, 200] {
            let ls = random_set(n, seed + 10);
            assert!(
                (auprc(&ls).unwrap() - exhaustive_ap(&ls)).abs() < 1e-9,
                "seed {seed} n {n}"
            );
        }
    }
}

#[test]
fn separated_and_single_class() {
    let ls = LabeledScores::new(vec![0.1, 0.2, 0.8, 0.9], vec![false, false, true, true]).unwrap();
    assert_eq!(auroc(&ls).unwrap(), 1.0);
    assert_eq!(auprc(&ls).unwrap(), 1.0);
    let one = LabeledScores::new(vec![0.1, 0.2], vec![true, true]).unwrap();
    assert!(matches!(
        auroc(&one),
        Err(Error::SingleClass {
            positives: 2,
            negatives: 0
        })
    ));
    assert!(matches!(auprc(&one), Err(Error::SingleClass { .. })));
    assert!(LabeledScores::new(vec![0.1], vec![]).is_err());
    assert!(LabeledScores::new(vec![f64::NAN], vec![true]).is_err());
}

#[test]
fn random_labels_give_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let a = auroc(&LabeledScores::new(scores, labels).unwrap()).unwrap();
    assert!((a - 0.5).abs() < 0.02, "{a}");
}

#[test]
fn all_tied_scores() {
    let ls = LabeledScores::new(vec![1.0; 10], (0..10).map(|i| i < 3).collect()).unwrap();
    assert!((auroc(&ls).unwrap() - 0.5).abs() < 1e-12);
    assert!((auprc(&ls).unwrap() - 0.3).abs() < 1e-12);
}

#[test]
fn curves_span_unit_square() {
    let ls = random_set(50, 4);
    let roc = roc_curve(&ls).unwrap();
    assert_eq!(roc[0], (0.0, 0.0));
    assert_eq!(*roc.last().unwrap(), (1.0, 1.0));
    assert!(roc.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    let pr = pr_curve(&ls).unwrap();
    assert_eq!(pr.last().unwrap().0, 1.0);
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, ("fpr", "tpr"), &roc).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("fpr,tpr\n0,0\n"));
    assert_eq!(text.lines().count(), roc.len() + 1);
}

#[test]
fn counts_to_metrics() {
    let c = ConfusionCounts::new(9, 1, 89, 1);
    let prf = precision_recall_f1(&c);
    assert!((prf.precision.unwrap() - 0.9).abs() < 1e-12);
    assert!((prf.recall.unwrap() - 0.9).abs() < 1e-12);
    assert!((prf.f1.unwrap() - 0.9).abs() < 1e-12);
    let r = rates(&c);
    assert!((r.tpr.unwrap() + r.fnr.unwrap() - 1.0).abs() < 1e-12);
    assert!((r.fpr.unwrap() + r.tnr.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(c.total(), 100);

    let none = ConfusionCounts::new(0, 0, 5, 0);
    let prf = precision_recall_f1(&none);
    assert_eq!((prf.precision, prf.recall, prf.f1), (None, None, None));
    let r = rates(&none);
    assert_eq!(r.tpr, None);
    assert_eq!(r.fpr, Some(0.0));

    let c =
        ConfusionCounts::from_predictions(&[true, true, false, false], &[true, false, false, true])
            .unwrap();
    assert_eq!(c, ConfusionCounts::new(1, 1, 1, 1));
}

#[test]
fn kfold_partitions() {
    let folds = kfold_split(10, 5, 7).unwrap();
    assert_eq!(folds.len(), 5);
    assert!(folds
        .iter()
        .all(|f| f.validation.len() == 2 && f.train.len() == 8));
    assert_eq!(folds, kfold_split(10, 5, 7).unwrap());
    assert_ne!(folds, kfold_split(10, 5, 8).unwrap());

    let folds = kfold_split(23, 5, 1).unwrap();
    let sizes: Vec<usize> = folds.iter().map(|f| f.validation.len()).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    let mut all = BTreeSet::new();
    for f in &folds {
        for &i in &f.validation {
            assert!(all.insert(i), "index {i} in two folds");
        }
        let train: BTreeSet<usize> = f.train.iter().copied().collect();
        assert!(f.validation.iter().all(|i| !train.contains(i)));
        assert_eq!(train.len() + f.validation.len(), 23);
    }
    assert_eq!(all, (0..23).collect());

    assert!(kfold_split(3, 5, 0).is_err());
    assert!(kfold_split(10, 1, 0).is_err());
}

#[test]
fn scenario_split_defaults() {
    let split = ScenarioSplit::default();
    let items = vec![(6, 'a'), (10, 'b'), (1, 'c'), (3, 'd')];
    let (train, test) = split.split(items, |x| Some(x.0)).unwrap();
    assert_eq!(train, vec![(10, 'b'), (3, 'd')]);
    assert_eq!(test, vec![(6, 'a'), (1, 'c')]);

    assert!(matches!(
        split.split(vec![Some(14)], |x| *x),
        Err(Error::UnknownScenario(Some(14)))
    ));
    assert!(matches!(
        split.split(vec![None::<u32>], |x| *x),
        Err(Error::UnknownScenario(None))
    ));
    let lenient = ScenarioSplit {
        strict: false,
        ..ScenarioSplit::default()
    };
    let (train, test) = lenient
        .split(vec![Some(14), None, Some(6)], |x| *x)
        .unwrap();
    assert!(train.is_empty());
    assert_eq!(test, vec![Some(6)]);

    let overlap = ScenarioSplit {
        train: [1].into(),
        test: [1].into(),
        strict: true,
    };
    assert!(overlap.split(Vec::<u32>::new(), |x| Some(*x)).is_err());
}

#[test]
fn report_marks_undefined_metrics() {
    let row = evaluate(
        "no positives",
        &[0.1, 0.2, 0.3],
        &[false, false, true],
        &[false, false, false],
    )
    .unwrap();
    assert_eq!(row.metrics.auroc, None);
    assert_eq!(row.metrics.recall, None);
    assert_eq!(row.metrics.fpr, Some(1.0 / 3.0));
    let mut report = Report::default();
    report.push(row);
    report.push(evaluate("mixed", &[0.1, 0.9], &[false, true], &[false, true]).unwrap());
    let table = report.table();
    assert!(table.contains(UNDEFINED));
    assert_eq!(table.lines().count(), 3);

    let mut buf = Vec::new();
    report.write_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.contains("\"auroc\":\"undefined\""));
    assert_eq!(Report::read_jsonl(&buf[..]).unwrap(), report);
}

#[test]
fn averaging_skips_undefined() {
    let a = evaluate("a", &[0.1, 0.9], &[false, true], &[false, true]).unwrap();
    let b = evaluate("b", &[0.1, 0.2], &[false, false], &[false, false]).unwrap();
    let avg = average_rows("avg", &[a, b]);
    assert_eq!(avg.metrics.auroc, Some(1.0));
    assert_eq!(avg.metrics.fpr, Some(0.0));
    assert_eq!(avg.samples, 4);
    assert_eq!(avg.counts.tn, 3);
}

proptest! {
    #[test]
    fn auroc_rank_invariant_and_flip(seed in 0u64..1000, shift in -5.0f64..5.0, scale in 0.1f64..10.0) {
        let ls = random_set(60, seed);
        prop_assume!(ls.positives() > 0 && ls.negatives() > 0);
        let a = auroc(&ls).unwrap();
        let mapped: Vec<f64> = ls.scores().iter().map(|s| (scale * s + shift).exp()).collect();
        let b = auroc(&LabeledScores::new(mapped, ls.labels().to_vec()).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        let flipped: Vec<bool> = ls.labels().iter().map(|l| !l).collect();
        let c = auroc(&LabeledScores::new(ls.scores().to_vec(), flipped).unwrap()).unwrap();
        prop_assert!((a + c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_metrics_in_unit_interval(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
        let c = ConfusionCounts::new(tp, fp, tn, fn_);
        let prf = precision_recall_f1(&c);
        for v in [prf.precision, prf.recall, prf.f1].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let r = rates(&c);
        if let (Some(t), Some(f)) = (r.tpr, r.fnr) {
            prop_assert!((t + f - 1.0).abs() < 1e-12);
        }
        if let (Some(f), Some(t)) = (r.fpr, r.tnr) {
            prop_assert!((t + f - 1.0).abs() < 1e-12);
        }
    }
}
