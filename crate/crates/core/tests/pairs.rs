//! Similarity and pair construction checked against independent
//! re-computations.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use revsum::corpus::{Corpus, Review};
use revsum::selfsup::{build_pairs, fit_tfidf, top_k, Candidate, PairBuilderConfig};
use revsum::synthetic::{mini_corpus, MINI_SEED};

fn review(id: &str, entity: &str, text: &str) -> Review {
    Review {
        review_id: id.into(),
        entity_id: entity.into(),
        text: text.into(),
        rating: 3,
        categories: BTreeSet::new(),
    }
}

/// Cosine similarity of smoothed tf-idf bags, written from scratch.
fn brute_tfidf_sim(docs: &[&str], a: usize, b: usize) -> f64 {
    let bags: Vec<BTreeMap<String, f64>> = docs
        .iter()
        .map(|d| {
            let mut m = BTreeMap::new();
            for raw in d.split_whitespace() {
                let chars: Vec<char> = raw.to_lowercase().chars().collect();
                let (Some(lo), Some(hi)) = (
                    chars.iter().position(|c| c.is_alphanumeric()),
                    chars.iter().rposition(|c| c.is_alphanumeric()),
                ) else {
                    continue;
                };
                *m.entry(chars[lo..=hi].iter().collect::<String>()).or_insert(0.0) += 1.0;
            }
            m
        })
        .collect();
    let n = docs.len() as f64;
    let idf = |w: &str| {
        let df = bags.iter().filter(|b| b.contains_key(w)).count() as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    };
    let weigh = |bag: &BTreeMap<String, f64>| -> BTreeMap<String, f64> {
        let raw: BTreeMap<String, f64> = bag.iter().map(|(w, c)| (w.clone(), c * idf(w))).collect();
        let norm = raw.values().map(|x| x * x).sum::<f64>().sqrt();
        raw.into_iter().map(|(w, x)| (w, x / norm)).collect()
    };
    let (va, vb) = (weigh(&bags[a]), weigh(&bags[b]));
    va.iter().map(|(w, x)| x * vb.get(w).copied().unwrap_or(0.0)).sum()
}

#[test]
fn three_document_similarity() {
    let docs = ["good pizza", "good pasta", "bad soup"];
    let corpus = Corpus::new(docs.iter().enumerate().map(|(i, d)| review(&format!("d{i}"), "e", d)).collect()).unwrap();
    let model = fit_tfidf(&corpus).unwrap();
    let got = model.cosine_sim(docs[0], docs[1]);
    assert!((got - brute_tfidf_sim(&docs, 0, 1)).abs() < 1e-9);
    assert!((got - 0.366446816266513).abs() < 1e-9);
    assert_eq!(model.cosine_sim(docs[0], docs[2]), 0.0);
}

#[test]
fn mini_corpus_pairs_hold_their_invariants() {
    let corpus = Corpus::new(mini_corpus(MINI_SEED)).unwrap();
    let model = fit_tfidf(&corpus).unwrap();
    let cfg = PairBuilderConfig::default();
    let pairs = build_pairs(&corpus, &model, &cfg).unwrap();
    assert_eq!(pairs, build_pairs(&corpus, &model, &cfg).unwrap());
    assert_eq!(pairs.len(), 60 * cfg.targets_for(12));
    let ids = corpus.id_map();
    let texts: Vec<&str> = corpus.reviews().iter().map(|r| r.text.as_str()).collect();
    let index: BTreeMap<&str, usize> = corpus.reviews().iter().enumerate().map(|(i, r)| (r.review_id.as_str(), i)).collect();
    for w in pairs.windows(2) {
        assert!(w[0].relevance >= w[1].relevance);
    }
    for p in &pairs {
        assert!(!p.input_review_ids.contains(&p.target_review_id));
        assert_eq!(p.input_review_ids.len(), cfg.k);
        assert!(p.input_review_ids.iter().all(|i| ids[i.as_str()].entity_id == p.entity_id));
        assert!((0.0..=cfg.k as f64).contains(&p.relevance));
        let t = index[p.target_review_id.as_str()];
        let recomputed: f64 = p
            .input_review_ids
            .iter()
            .map(|i| brute_tfidf_sim(&texts, t, index[i.as_str()]))
            .sum();
        assert!((recomputed - p.relevance).abs() < 1e-9, "{} vs {}", recomputed, p.relevance);
    }
}

proptest! {
    #[test]
    fn top_k_is_the_best_subset(sims in prop::collection::vec(0u8..5, 1..8), k_seed in 0usize..8) {
        let k = 1 + k_seed % sims.len();
        let ids: Vec<String> = (0..sims.len()).map(|i| format!("r{i}")).collect();
        let pool: Vec<Candidate> = ids.iter().zip(&sims).map(|(id, &s)| Candidate { review_id: id, sim: s as f64 / 4.0 }).collect();
        let (got, rel) = top_k(pool, k).unwrap();
        // best subset by (sum desc, sorted ids asc)
        let mut best: Option<(f64, Vec<String>)> = None;
        for mask in 0u32..(1 << sims.len()) {
            if mask.count_ones() as usize != k { continue; }
            let chosen: Vec<usize> = (0..sims.len()).filter(|i| mask & (1 << i) != 0).collect();
            let total: f64 = chosen.iter().map(|&i| sims[i] as f64 / 4.0).sum();
            let names: Vec<String> = chosen.iter().map(|&i| ids[i].clone()).collect();
            let better = match &best {
                None => true,
                Some((bt, bn)) => total > *bt || (total == *bt && names < *bn),
            };
            if better { best = Some((total, names)); }
        }
        let (bt, bn) = best.unwrap();
        prop_assert_eq!(got, bn);
        prop_assert!((rel - bt).abs() < 1e-12);
    }
}
