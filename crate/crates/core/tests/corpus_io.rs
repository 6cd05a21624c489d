//! Corpus files survive a write/read cycle and splits partition entities.

use std::collections::BTreeSet;

use proptest::prelude::*;
use revsum::corpus::{ingest_corpus, partition_corpus, Corpus, Review};

fn corpus_strategy() -> impl Strategy<Value = Vec<Review>> {
    prop::collection::vec(("[a-z]{1,3}", "[ -~]{1,40}", 1u8..=5, prop::collection::btree_set("[A-Z][a-z]{0,5}", 0..3)), 1..30)
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .filter(|(_, (_, text, _, _))| !text.trim().is_empty())
                .map(|(i, (entity, text, rating, categories))| Review {
                    review_id: format!("r{i:03}"),
                    entity_id: entity,
                    text,
                    rating,
                    categories,
                })
                .collect()
        })
        .prop_filter("needs a review", |v: &Vec<Review>| !v.is_empty())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jsonl_round_trip(reviews in corpus_strategy()) {
        let corpus = Corpus::new(reviews).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        corpus.write_jsonl(&path).unwrap();
        let back = ingest_corpus(&path, 1).unwrap();
        prop_assert_eq!(back.skipped_lines, 0);
        prop_assert_eq!(back.corpus, corpus);
    }

    #[test]
    fn partition_is_disjoint_and_complete(reviews in corpus_strategy(), fraction in 0.05f64..0.95, seed in 0u64..1000) {
        let corpus = Corpus::new(reviews).unwrap();
        prop_assume!(corpus.num_entities() >= 2);
        let (train, valid) = partition_corpus(&corpus, fraction, seed).unwrap();
        let t: BTreeSet<&str> = train.entities().collect();
        let v: BTreeSet<&str> = valid.entities().collect();
        prop_assert!(t.is_disjoint(&v));
        prop_assert_eq!(t.len() + v.len(), corpus.num_entities());
        prop_assert!(!v.is_empty() && !t.is_empty());
        prop_assert_eq!(train.len() + valid.len(), corpus.len());
        let again = partition_corpus(&corpus, fraction, seed).unwrap();
        prop_assert_eq!(again.0, train);
    }
}
