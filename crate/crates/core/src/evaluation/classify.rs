//! Sentiment accuracy and category micro-F1 of generated summaries.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::control::{predict_categories, train_one_vs_rest, ClassifierConfig, LinearClassifier, ReviewFeatures};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive];

    /// 1-2 stars negative, 3 neutral, 4-5 positive.
    pub fn from_rating(rating: u8) -> Sentiment {
        match rating {
            0..=2 => Sentiment::Negative,
            3 => Sentiment::Neutral,
            _ => Sentiment::Positive,
        }
    }

    /// Class of the mean rating rounded half-up to a whole star.
    pub fn from_mean_rating(ratings: &[u8]) -> Result<Sentiment> {
        if ratings.is_empty() {
            return Err(Error::data("no ratings"));
        }
        let sum: u32 = ratings.iter().map(|&r| r as u32).sum();
        let n = ratings.len() as u32;
        // floor(sum / n + 1/2) in integers.
        let rounded = (2 * sum + n) / (2 * n);
        Ok(Sentiment::from_rating(rounded as u8))
    }

    pub fn label(self) -> &'static str {
        match self {
            Sentiment::Negative => "negative",
            Sentiment::Neutral => "neutral",
            Sentiment::Positive => "positive",
        }
    }
}

/// Three one-vs-rest linear classifiers; the largest decision value wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentClassifier {
    pub classifiers: Vec<LinearClassifier>,
}

impl SentimentClassifier {
    pub fn train(corpus: &Corpus, cfg: &ClassifierConfig, seed: u64) -> Result<Self> {
        let features = ReviewFeatures::new(corpus);
        let classifiers = Sentiment::ALL
            .iter()
            .map(|&s| {
                let positive: BTreeSet<usize> = corpus
                    .reviews()
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| Sentiment::from_rating(r.rating) == s)
                    .map(|(i, _)| i)
                    .collect();
                train_one_vs_rest(&features, s.label(), &positive, corpus.len(), cfg, seed.wrapping_add(s as u64))
                    .map(|(c, _)| c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SentimentClassifier { classifiers })
    }

    /// Predicted class; ties go to the more negative class.
    pub fn predict(&self, text: &str) -> Result<Sentiment> {
        if self.classifiers.len() != 3 {
            return Err(Error::data("sentiment classifier is not trained"));
        }
        let scores: Vec<f64> = self.classifiers.iter().map(|c| c.decision(text)).collect();
        let best = (0..3).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        Ok(Sentiment::ALL[best])
    }
}

/// Fraction of summaries whose predicted class equals the class of their
/// inputs' mean rating.
pub fn sentiment_accuracy(clf: &SentimentClassifier, items: &[(&str, Vec<u8>)]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::data("no summaries to score"));
    }
    let mut hits = 0;
    for (text, ratings) in items {
        if clf.predict(text)? == Sentiment::from_mean_rating(ratings)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / items.len() as f64)
}

/// Pooled decision counts of a multi-label prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct F1Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl F1Counts {
    pub fn add(&mut self, predicted: &BTreeSet<String>, gold: &BTreeSet<String>) {
        self.tp += predicted.intersection(gold).count();
        self.fp += predicted.difference(gold).count();
        self.fn_ += gold.difference(predicted).count();
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / denom as f64
    }
}

/// Micro-F1 of `predict_categories` (threshold 0) against gold labels.
pub fn category_micro_f1(classifiers: &[LinearClassifier], items: &[(&str, BTreeSet<String>)]) -> (f64, F1Counts) {
    let mut c = F1Counts::default();
    for (text, gold) in items {
        c.add(&predict_categories(classifiers, text, 0.0), gold);
    }
    (c.f1(), c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Review;

    #[test]
    fn rating_buckets() {
        let classes: Vec<Sentiment> = (1..=5).map(Sentiment::from_rating).collect();
        assert_eq!(
            classes,
            [
                Sentiment::Negative,
                Sentiment::Negative,
                Sentiment::Neutral,
                Sentiment::Positive,
                Sentiment::Positive
            ]
        );
        assert_eq!(Sentiment::from_mean_rating(&[2, 3]).unwrap(), Sentiment::Neutral);
        assert_eq!(Sentiment::from_mean_rating(&[3, 4]).unwrap(), Sentiment::Positive);
        assert_eq!(Sentiment::from_mean_rating(&[2, 2, 3]).unwrap(), Sentiment::Negative);
    }

    #[test]
    fn pooled_counts() {
        let c = F1Counts { tp: 2, fp: 1, fn_: 1 };
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-15);
        let mut z = F1Counts::default();
        z.add(&BTreeSet::new(), &BTreeSet::from(["a".to_string()]));
        assert_eq!(z.f1(), 0.0);
        let mut p = F1Counts::default();
        let s = BTreeSet::from(["a".to_string(), "b".to_string()]);
        p.add(&s, &s);
        assert_eq!(p.f1(), 1.0);
    }

    #[test]
    fn separable_sentiment_fixture() {
        let mut reviews = Vec::new();
        let fillers = ["food", "staff", "room", "price", "view", "music", "wait", "menu"];
        for i in 0..90 {
            let (rating, word) = match i % 3 {
                0 => (5, "love"),
                1 => (1, "hate"),
                _ => (3, "meh"),
            };
            let f = fillers[i % fillers.len()];
            reviews.push(Review {
                review_id: format!("r{i:03}"),
                entity_id: format!("e{}", i / 10),
                text: format!("i {word} the {f}"),
                rating,
                categories: BTreeSet::new(),
            });
        }
        let corpus = Corpus::new(reviews).unwrap();
        let cfg = ClassifierConfig {
            min_positives: 10,
            ..ClassifierConfig::default()
        };
        let clf = SentimentClassifier::train(&corpus, &cfg, 3).unwrap();
        let items = vec![
            ("we love it", vec![5, 4]),
            ("they hate it", vec![1, 2]),
            ("so meh", vec![3, 3]),
        ];
        assert_eq!(sentiment_accuracy(&clf, &items).unwrap(), 1.0);
        let untrained = SentimentClassifier { classifiers: vec![] };
        assert!(untrained.predict("x").is_err());
    }
}
