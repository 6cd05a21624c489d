//! Word-level tokenization and n-gram features.

use std::collections::{BTreeMap, BTreeSet};

/// Lowercased words with leading and trailing punctuation stripped.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// All contiguous word n-grams of order `n`, joined by single spaces.
pub fn ngrams_of(words: &[String], n: usize) -> Vec<String> {
    if n == 0 || words.len() < n {
        return Vec::new();
    }
    words.windows(n).map(|w| w.join(" ")).collect()
}

/// Multiset of word unigrams and bigrams.
pub type NgramCounts = BTreeMap<String, u32>;

pub fn extract_ngrams(text: &str) -> NgramCounts {
    let ws = words(text);
    let mut out = NgramCounts::new();
    for g in ngrams_of(&ws, 1).into_iter().chain(ngrams_of(&ws, 2)) {
        *out.entry(g).or_default() += 1;
    }
    out
}

/// Distinct unigrams and bigrams of a text.
pub fn ngram_set(text: &str) -> BTreeSet<String> {
    extract_ngrams(text).into_keys().collect()
}

/// Which n-gram orders a feature space indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NgramOrders {
    Unigrams,
    UnigramsAndBigrams,
}

/// Dense column indexing of word n-grams observed in a document collection.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramFeatureSpace {
    orders: NgramOrders,
    feature_to_index: BTreeMap<String, usize>,
    features: Vec<String>,
    document_frequency: Vec<u32>,
}

impl NgramFeatureSpace {
    /// Indexes every n-gram present in `docs`; columns follow lexicographic order.
    pub fn fit<'a, I>(docs: I, orders: NgramOrders) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        for doc in docs {
            let counts = Self::doc_counts(doc, orders);
            for g in counts.into_keys() {
                *df.entry(g).or_default() += 1;
            }
        }
        let features: Vec<String> = df.keys().cloned().collect();
        let feature_to_index = features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        NgramFeatureSpace {
            orders,
            feature_to_index,
            features,
            document_frequency: df.into_values().collect(),
        }
    }

    fn doc_counts(doc: &str, orders: NgramOrders) -> NgramCounts {
        match orders {
            NgramOrders::UnigramsAndBigrams => extract_ngrams(doc),
            NgramOrders::Unigrams => {
                let mut out = NgramCounts::new();
                for w in words(doc) {
                    *out.entry(w).or_default() += 1;
                }
                out
            }
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, feature: &str) -> Option<usize> {
        self.feature_to_index.get(feature).copied()
    }

    pub fn feature(&self, index: usize) -> &str {
        &self.features[index]
    }

    pub fn document_frequency(&self, index: usize) -> u32 {
        self.document_frequency[index]
    }

    /// Sparse count vector of a text, sorted by column; unseen n-grams are dropped.
    pub fn vectorize(&self, text: &str) -> Vec<(usize, f64)> {
        Self::doc_counts(text, self.orders)
            .into_iter()
            .filter_map(|(g, c)| self.index_of(&g).map(|i| (i, c as f64)))
            .collect::<BTreeMap<_, _>>()
            .into_iter()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn good_pizza() {
        let got = extract_ngrams("Good pizza");
        let want: NgramCounts = [("good", 1), ("pizza", 1), ("good pizza", 1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn case_folding_counts() {
        let got = extract_ngrams("A a");
        assert_eq!(got["a"], 2);
        assert_eq!(got["a a"], 1);
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn punctuation_is_stripped() {
        assert_eq!(words("Great, \"wine\"! ... (ok)"), vec!["great", "wine", "ok"]);
        assert!(extract_ngrams("").is_empty());
        assert_eq!(words("don't stop"), vec!["don't", "stop"]);
    }

    #[test]
    fn feature_space_indices_are_dense() {
        let fs = NgramFeatureSpace::fit(["good pizza", "good pasta"], NgramOrders::Unigrams);
        assert_eq!(fs.len(), 3);
        assert_eq!(fs.index_of("good"), Some(0));
        assert_eq!(fs.document_frequency(0), 2);
        assert_eq!(fs.vectorize("good good soup"), vec![(0, 2.0)]);
        let both = NgramFeatureSpace::fit(["good pizza"], NgramOrders::UnigramsAndBigrams);
        assert_eq!(both.len(), 3);
    }

    proptest! {
        #[test]
        fn unigram_and_bigram_totals(ws in proptest::collection::vec("[a-z]{1,4}", 1..12)) {
            let text = ws.join(" ");
            let total: u32 = extract_ngrams(&text).values().sum();
            prop_assert_eq!(total as usize, ws.len() + ws.len() - 1);
        }
    }
}
