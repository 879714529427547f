mod common;

use common::oracles::{auroc_pairs, wilcoxon_enumerated};
use cssm_core::metrics_eval::{
    auprc_macro, auroc_binary, auroc_macro, average_precision, cohens_kappa, confusion_matrix,
    evaluate, evaluate_logits, f1_from_confusion, f1_from_counts, reports_csv,
    wilcoxon_signed_rank, wilcoxon_signed_rank_with, PredictionSet, WilcoxonMethod,
    REPORT_CSV_HEADER,
};
use cssm_core::CssmError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_probs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-12).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn chance_set(n_classes: usize, samples: usize, seed: u64) -> PredictionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..samples)
        .map(|_| random_probs(&mut rng, n_classes))
        .collect();
    let labels = (0..samples).map(|_| rng.gen_range(0..n_classes)).collect();
    PredictionSet::new(scores, labels, n_classes).unwrap()
}

#[test]
fn f1_reference_counts() {
    let f1 = 100.0 * f1_from_counts(230, 72, 90);
    assert!((f1 - 73.95).abs() < 0.005, "{f1}");
    assert_eq!(f1_from_counts(230, 72, 90), 460.0 / 622.0);
    assert_eq!(f1_from_counts(0, 0, 0), 0.0);
    assert_eq!(f1_from_counts(5, 0, 0), 1.0);
}

#[test]
fn confusion_accuracy_f1_and_kappa() {
    let c = vec![vec![40, 10], vec![10, 40]];
    let (per, macro_f1) = f1_from_confusion(&c);
    assert!(per.iter().all(|v| (v - 0.8).abs() < 1e-12));
    assert!((macro_f1 - 0.8).abs() < 1e-12);
    assert!((cohens_kappa(&c).unwrap() - 0.6).abs() < 1e-12);
    assert!((cohens_kappa(&[vec![7, 0], vec![0, 3]]).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(
        cohens_kappa(&[vec![0, 0], vec![0, 0]]),
        Err(CssmError::Config(_))
    ));

    let labels = [0, 0, 1, 2, 2, 2];
    let preds = [0, 1, 1, 2, 0, 2];
    let c = confusion_matrix(&labels, &preds, 3);
    assert_eq!(c, vec![vec![1, 1, 0], vec![0, 1, 0], vec![1, 0, 2]]);

    let scores = vec![
        vec![0.9, 0.1],
        vec![0.8, 0.2],
        vec![0.3, 0.7],
        vec![0.4, 0.6],
        vec![0.6, 0.4],
    ];
    let r = evaluate(&PredictionSet::new(scores, vec![0, 0, 1, 1, 1], 2).unwrap()).unwrap();
    assert!((r.accuracy - 80.0).abs() < 1e-12);
    assert_eq!(r.confusion, vec![vec![2, 0], vec![1, 2]]);
    assert_eq!(r.n_samples, 5);
}

#[test]
fn chance_level_classifiers() {
    let two = evaluate(&chance_set(2, 10_000, 1)).unwrap();
    let four = evaluate(&chance_set(4, 10_000, 2)).unwrap();
    assert!((two.accuracy - 50.0).abs() <= 1.5, "{}", two.accuracy);
    assert!((four.accuracy - 25.0).abs() <= 1.5, "{}", four.accuracy);
    assert!((two.auroc_macro - 50.0).abs() <= 1.5, "{}", two.auroc_macro);
    assert!(
        (four.auroc_macro - 50.0).abs() <= 1.5,
        "{}",
        four.auroc_macro
    );
    assert!(
        (four.auprc_macro - 25.0).abs() <= 1.5,
        "{}",
        four.auprc_macro
    );
    assert!(two.kappa.abs() <= 0.03 && four.kappa.abs() <= 0.03);
}

#[test]
fn perfect_separation_and_ranges() {
    let scores: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            if i % 2 == 0 {
                vec![0.9, 0.1]
            } else {
                vec![0.2, 0.8]
            }
        })
        .collect();
    let labels = (0..40).map(|i| i % 2).collect();
    let p = PredictionSet::new(scores, labels, 2).unwrap();
    assert_eq!(auroc_macro(&p), 100.0);
    assert_eq!(auprc_macro(&p), 100.0);
    let r = evaluate(&p).unwrap();
    assert_eq!((r.accuracy, r.macro_f1, r.kappa), (100.0, 100.0, 1.0));

    let r = evaluate(&chance_set(3, 300, 9)).unwrap();
    for v in [r.accuracy, r.macro_f1, r.auroc_macro, r.auprc_macro] {
        assert!((0.0..=100.0).contains(&v));
    }
    assert!((-1.0..=1.0).contains(&r.kappa));
}

#[test]
fn single_class_auroc_is_undefined() {
    assert_eq!(auroc_binary(&[0.1, 0.5], &[true, true]), None);
    assert_eq!(average_precision(&[0.1, 0.5], &[false, false]), None);
    // one perfect positive at the top of three
    assert_eq!(
        average_precision(&[0.9, 0.5, 0.1], &[true, false, false]),
        Some(1.0)
    );
    assert_eq!(
        average_precision(&[0.9, 0.5, 0.1], &[false, true, false]),
        Some(0.5)
    );
}

#[test]
fn invalid_prediction_sets_are_rejected() {
    assert!(matches!(
        PredictionSet::new(vec![vec![0.5, 0.5]], vec![0, 1], 2),
        Err(CssmError::Dimension(_))
    ));
    assert!(matches!(
        PredictionSet::new(vec![vec![0.7, 0.7]], vec![0], 2),
        Err(CssmError::Config(_))
    ));
    assert!(matches!(
        PredictionSet::new(vec![vec![0.5, 0.5]], vec![2], 2),
        Err(CssmError::Config(_))
    ));
    assert!(matches!(
        PredictionSet::new(vec![vec![1.0]], vec![0], 1),
        Err(CssmError::Config(_))
    ));
    assert!(evaluate(&PredictionSet::new(vec![], vec![], 2).unwrap()).is_err());
}

#[test]
fn logits_and_csv() {
    let r = evaluate_logits(
        &[vec![2.0, -1.0], vec![-3.0, 0.5], vec![0.1, 0.0]],
        &[0, 1, 1],
        2,
    )
    .unwrap();
    assert!((r.accuracy - 200.0 / 3.0).abs() < 1e-12);
    let csv = reports_csv(&[("fold0".to_string(), &r)]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(REPORT_CSV_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 6);
    assert_eq!(row[0], "fold0");
    assert!((row[1].parse::<f64>().unwrap() - r.accuracy).abs() < 1e-4);
}

proptest! {
    #[test]
    fn auroc_equals_pair_counting(
        raw in prop::collection::vec((0u8..20, any::<bool>()), 2..200),
    ) {
        // coarse scores force plenty of ties
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 7.0).collect();
        let positive: Vec<bool> = raw.iter().map(|(_, p)| *p).collect();
        let got = auroc_binary(&scores, &positive);
        if positive.iter().all(|p| *p) || positive.iter().all(|p| !*p) {
            prop_assert!(got.is_none());
        } else {
            prop_assert!((got.unwrap() - auroc_pairs(&scores, &positive)).abs() < 1e-12);
        }
    }

    #[test]
    fn ranking_metrics_ignore_monotone_transforms(
        raw in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 4..100),
    ) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s).collect();
        let positive: Vec<bool> = raw.iter().map(|(_, p)| *p).collect();
        prop_assume!(positive.iter().any(|p| *p) && positive.iter().any(|p| !*p));
        let moved: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() + 3.0).collect();
        prop_assert!((auroc_binary(&scores, &positive).unwrap() - auroc_binary(&moved, &positive).unwrap()).abs() < 1e-12);
        prop_assert!(
            (average_precision(&scores, &positive).unwrap() - average_precision(&moved, &positive).unwrap()).abs() < 1e-12
        );
        // flipping the score order mirrors AUROC
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auroc_binary(&scores, &positive).unwrap() + auroc_binary(&flipped, &positive).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn class_relabeling_leaves_macro_metrics_unchanged(seed in 0u64..1000) {
        let p = chance_set(3, 60, seed);
        let perm = [2usize, 0, 1];
        let scores = p.scores.iter().map(|r| {
            let mut s = vec![0.0; 3];
            for k in 0..3 { s[perm[k]] = r[k]; }
            s
        }).collect();
        let labels = p.labels.iter().map(|&y| perm[y]).collect();
        let q = PredictionSet::new(scores, labels, 3).unwrap();
        let (a, b) = (evaluate(&p).unwrap(), evaluate(&q).unwrap());
        prop_assert!((a.accuracy - b.accuracy).abs() < 1e-9);
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-9);
        prop_assert!((a.auroc_macro - b.auroc_macro).abs() < 1e-9);
        prop_assert!((a.auprc_macro - b.auprc_macro).abs() < 1e-9);
        prop_assert!((a.kappa - b.kappa).abs() < 1e-9);
    }

    #[test]
    fn exact_wilcoxon_matches_enumeration(
        d in prop::collection::vec(prop_oneof![(-6i32..=6).prop_map(|v| v as f64), -3.0f64..3.0], 1..=10),
    ) {
        let zeros = vec![0.0; d.len()];
        let r = wilcoxon_signed_rank_with(&d, &zeros, WilcoxonMethod::Exact).unwrap();
        if d.iter().all(|v| *v == 0.0) {
            prop_assert!(r.degenerate);
        } else {
            prop_assert!((r.p_value - wilcoxon_enumerated(&d)).abs() < 1e-12);
            prop_assert!((r.w_plus + r.w_minus - (r.n * (r.n + 1)) as f64 / 2.0).abs() < 1e-12);
        }
    }
}

#[test]
fn wilcoxon_reference_cases() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let r = wilcoxon_signed_rank(&a, &[0.0; 6]).unwrap();
    assert_eq!((r.w_plus, r.w_minus, r.n), (21.0, 0.0, 6));
    assert!((r.p_value - 0.031_25).abs() < 1e-15 && r.exact);
    // symmetric in the sign of the differences
    let r2 = wilcoxon_signed_rank(&[0.0; 6], &a).unwrap();
    assert_eq!(r2.p_value, r.p_value);
    assert_eq!(r2.w_minus, 21.0);

    let same = wilcoxon_signed_rank(&[0.3, 0.4, 0.5], &[0.3, 0.4, 0.5]).unwrap();
    assert!(same.degenerate && same.p_value == 1.0);
    // zero differences are dropped
    let r = wilcoxon_signed_rank(&[1.0, 5.0, 2.0], &[0.0, 5.0, 0.0]).unwrap();
    assert_eq!(r.n, 2);

    assert!(matches!(
        wilcoxon_signed_rank(&[1.0], &[0.0, 1.0]),
        Err(CssmError::Dimension(_))
    ));
    assert!(matches!(
        wilcoxon_signed_rank_with(&[1.0, 2.0, 3.0], &[0.0; 3], WilcoxonMethod::Normal),
        Err(CssmError::Config(_))
    ));
    let big: Vec<f64> = (1..=31).map(|v| v as f64).collect();
    assert!(matches!(
        wilcoxon_signed_rank_with(&big, &[0.0; 31], WilcoxonMethod::Exact),
        Err(CssmError::Config(_))
    ));
    assert!(!wilcoxon_signed_rank(&big, &[0.0; 31]).unwrap().exact);
}

#[test]
fn normal_approximation_tracks_exact_at_twelve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let d: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.5)).collect();
        let zeros = [0.0; 12];
        let ex = wilcoxon_signed_rank_with(&d, &zeros, WilcoxonMethod::Exact).unwrap();
        let nm = wilcoxon_signed_rank_with(&d, &zeros, WilcoxonMethod::Normal).unwrap();
        assert!(
            (ex.p_value - nm.p_value).abs() < 0.02,
            "{} vs {}",
            ex.p_value,
            nm.p_value
        );
    }
}
