//! Range and identity properties of the overlap metrics.

use proptest::prelude::*;
use revsum::evaluation::{dist_metrics, rouge_l, rouge_n};

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["the", "cat", "sat", "on", "mat", "a"]), 0..12).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn scores_lie_in_unit_interval(a in text(), b in text()) {
        for f in [rouge_n(&a, &b, 1), rouge_n(&a, &b, 2), rouge_l(&a, &b)] {
            prop_assert!((0.0..=1.0).contains(&f));
        }
        prop_assert!(rouge_l(&a, &b) >= rouge_n(&a, &b, 2) - 1.0);
        prop_assert_eq!(rouge_n(&a, &b, 1), rouge_n(&b, &a, 1));
        prop_assert_eq!(rouge_l(&a, &b), rouge_l(&b, &a));
    }

    #[test]
    fn identical_texts_score_one(a in text()) {
        prop_assume!(!a.is_empty());
        prop_assert_eq!(rouge_n(&a, &a, 1), 1.0);
        prop_assert_eq!(rouge_l(&a, &a), 1.0);
    }

    #[test]
    fn distinct_ratios_are_positive_fractions(texts in prop::collection::vec(text(), 1..6)) {
        prop_assume!(texts.iter().any(|t| !t.is_empty()));
        let d = dist_metrics(&texts).unwrap();
        for v in d.summary_level.iter().chain(&d.corpus_level).flatten() {
            prop_assert!(*v > 0.0 && *v <= 1.0);
        }
    }

    #[test]
    fn repeating_a_summary_lowers_the_pooled_ratio(a in text()) {
        prop_assume!(!a.is_empty());
        let d = dist_metrics(&[a.clone(), a]).unwrap();
        prop_assert!(d.corpus_level[0].unwrap() <= d.summary_level[0].unwrap());
    }
}
