use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::tokenizer::{NgramFeatureSpace, NgramOrders};

/// Sparse vector sorted by column index.
pub type SparseVec = Vec<(usize, f64)>;

/// Unigram tf-idf space with smoothed idf and L2-normalized document vectors.
#[derive(Debug, Clone)]
pub struct TfidfModel {
    features: NgramFeatureSpace,
    idf: Vec<f64>,
}

/// Fits idf(f) = ln((1 + N) / (1 + df(f))) + 1 over every review in `corpus`.
pub fn fit_tfidf(corpus: &Corpus) -> Result<TfidfModel> {
    if corpus.is_empty() {
        return Err(Error::data("cannot fit tf-idf on an empty corpus"));
    }
    let features = NgramFeatureSpace::fit(
        corpus.reviews().iter().map(|r| r.text.as_str()),
        NgramOrders::Unigrams,
    );
    let n = corpus.len() as f64;
    let idf = (0..features.len())
        .map(|i| ((1.0 + n) / (1.0 + features.document_frequency(i) as f64)).ln() + 1.0)
        .collect();
    Ok(TfidfModel { features, idf })
}

impl TfidfModel {
    pub fn idf(&self, term: &str) -> Option<f64> {
        self.features.index_of(term).map(|i| self.idf[i])
    }

    /// Unit-norm tf-idf vector, or the empty vector when no term is known.
    pub fn vector(&self, text: &str) -> SparseVec {
        let mut v: SparseVec = self
            .features
            .vectorize(text)
            .into_iter()
            .map(|(i, tf)| (i, tf * self.idf[i]))
            .collect();
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, x)| *x /= norm);
        }
        v
    }

    pub fn cosine_sim(&self, a: &str, b: &str) -> f64 {
        dot(&self.vector(a), &self.vector(b))
    }
}

/// Dot product of two index-sorted sparse vectors.
pub fn dot(a: &SparseVec, b: &SparseVec) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Review;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Review {
                    review_id: format!("r{i}"),
                    entity_id: "e".into(),
                    text: t.to_string(),
                    rating: 3,
                    categories: Default::default(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn idf_formula() {
        let m = fit_tfidf(&corpus(&["good pizza", "good pasta", "good soup"])).unwrap();
        assert!((m.idf("good").unwrap() - 1.0).abs() < 1e-15);
        assert!((m.idf("pizza").unwrap() - 1.693_147_180_559_945_3).abs() < 1e-12);
    }

    #[test]
    fn vectors_are_unit_or_zero() {
        let m = fit_tfidf(&corpus(&["good pizza pizza", "bad soup"])).unwrap();
        let v = m.vector("good pizza pizza");
        let n: f64 = v.iter().map(|(_, x)| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(m.vector("!!!").is_empty());
        assert_eq!(m.cosine_sim("!!!", "good"), 0.0);
    }

    #[test]
    fn self_and_disjoint_similarity() {
        let m = fit_tfidf(&corpus(&["good pizza", "bad soup"])).unwrap();
        assert!((m.cosine_sim("good pizza", "good pizza") - 1.0).abs() < 1e-12);
        assert_eq!(m.cosine_sim("good pizza", "bad soup"), 0.0);
    }
}
