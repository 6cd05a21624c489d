//! L1-regularized squared-hinge linear classifiers over word n-gram counts.
//!
//! Minimizes `sum_i max(0, 1 - y_i (theta . x_i + b))^2 + lambda * |theta|_1`
//! by cyclic proximal coordinate descent. Each coordinate first tries a
//! Newton-like step using the curvature of the currently active samples and
//! falls back to the step given by the global quadratic majorizer when the
//! trial does not decrease the objective, so every epoch is non-increasing.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::tokenizer::{extract_ngrams, NgramFeatureSpace, NgramOrders};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    /// Sampled negatives per positive.
    pub neg_ratio: f64,
    /// L1 penalty weight.
    pub reg_strength: f64,
    pub min_positives: usize,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            neg_ratio: 1.0,
            reg_strength: 0.5,
            min_positives: 20,
            max_epochs: 500,
            tolerance: 1e-6,
        }
    }
}

/// A trained linear decision function `theta . x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub label: String,
    /// Non-zero weights keyed by n-gram.
    pub weights: BTreeMap<String, f64>,
    pub bias: f64,
    pub converged: bool,
    pub epochs: usize,
}

impl LinearClassifier {
    pub fn decision(&self, text: &str) -> f64 {
        self.bias
            + extract_ngrams(text)
                .iter()
                .filter_map(|(g, &c)| self.weights.get(g).map(|w| w * c as f64))
                .sum::<f64>()
    }
}

/// Unigram+bigram count rows for every review of a corpus.
pub struct ReviewFeatures {
    pub space: NgramFeatureSpace,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ReviewFeatures {
    pub fn new(corpus: &Corpus) -> Self {
        let space = NgramFeatureSpace::fit(
            corpus.reviews().iter().map(|r| r.text.as_str()),
            NgramOrders::UnigramsAndBigrams,
        );
        let rows = corpus.reviews().iter().map(|r| space.vectorize(&r.text)).collect();
        ReviewFeatures { space, rows }
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }
}

/// Outcome of one binary training run, with per-epoch objective values.
#[derive(Debug, Clone)]
pub struct BinaryFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub epochs: usize,
    /// Objective before the first epoch followed by its value after each epoch.
    pub objective_trace: Vec<f64>,
}

struct Columns {
    entries: Vec<Vec<(usize, f64)>>,
    sq_norm: Vec<f64>,
}

impl Columns {
    fn new(rows: &[&[(usize, f64)]], dim: usize) -> Self {
        let mut entries = vec![Vec::new(); dim];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row.iter() {
                entries[j].push((i, v));
            }
        }
        let sq_norm = entries
            .iter()
            .map(|c| c.iter().map(|(_, v)| v * v).sum())
            .collect();
        Columns { entries, sq_norm }
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Squared-hinge data term given slacks `r_i = 1 - y_i f(x_i)`.
fn data_loss(slack: &[f64]) -> f64 {
    slack.iter().map(|&r| if r > 0.0 { r * r } else { 0.0 }).sum()
}

pub fn objective(slack: &[f64], weights: &[f64], lambda: f64) -> f64 {
    data_loss(slack) + lambda * weights.iter().map(|w| w.abs()).sum::<f64>()
}

/// Change in data loss if coordinate `col` moves by `delta`.
fn coordinate_loss_change(col: &[(usize, f64)], labels: &[f64], slack: &[f64], delta: f64) -> f64 {
    col.iter()
        .map(|&(i, x)| {
            let old = slack[i];
            let new = old - labels[i] * x * delta;
            new.max(0.0).powi(2) - old.max(0.0).powi(2)
        })
        .sum()
}

/// Fits a binary squared-hinge + L1 classifier on sparse rows with labels in {-1, +1}.
pub fn fit_binary(
    rows: &[&[(usize, f64)]],
    labels: &[f64],
    dim: usize,
    lambda: f64,
    max_epochs: usize,
    tolerance: f64,
) -> BinaryFit {
    let n = rows.len();
    let cols = Columns::new(rows, dim);
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut slack = vec![1.0; n];
    let mut trace = vec![objective(&slack, &weights, lambda)];
    let mut converged = false;
    let mut epochs = 0;

    while epochs < max_epochs {
        epochs += 1;
        let mut max_change: f64 = 0.0;

        // Unpenalized bias: exact majorizer step, curvature bound 2n.
        if n > 0 {
            let g: f64 = (0..n).map(|i| -2.0 * labels[i] * slack[i].max(0.0)).sum();
            let delta = -g / (2.0 * n as f64);
            if delta != 0.0 {
                for i in 0..n {
                    slack[i] -= labels[i] * delta;
                }
                bias += delta;
                max_change = max_change.max(delta.abs());
            }
        }

        for j in 0..dim {
            let col = &cols.entries[j];
            if col.is_empty() {
                continue;
            }
            let mut grad = 0.0;
            let mut active_curv = 0.0;
            for &(i, x) in col {
                if slack[i] > 0.0 {
                    grad -= 2.0 * labels[i] * x * slack[i];
                    active_curv += 2.0 * x * x;
                }
            }
            let w = weights[j];
            let full_curv = 2.0 * cols.sq_norm[j];
            let penalty_change = |nw: f64| lambda * (nw.abs() - w.abs());
            let mut chosen = None;
            if active_curv > 0.0 && active_curv < full_curv {
                let trial = soft_threshold(w - grad / active_curv, lambda / active_curv);
                let d = trial - w;
                if d != 0.0
                    && coordinate_loss_change(col, labels, &slack, d) + penalty_change(trial) <= 0.0
                {
                    chosen = Some(trial);
                }
            }
            let new_w = chosen.unwrap_or_else(|| soft_threshold(w - grad / full_curv, lambda / full_curv));
            let delta = new_w - w;
            if delta != 0.0 {
                for &(i, x) in col {
                    slack[i] -= labels[i] * x * delta;
                }
                weights[j] = new_w;
                max_change = max_change.max(delta.abs());
            }
        }
        trace.push(objective(&slack, &weights, lambda));
        if max_change < tolerance {
            converged = true;
            break;
        }
    }
    BinaryFit {
        weights,
        bias,
        converged,
        epochs,
        objective_trace: trace,
    }
}

/// Indices of the sampled training set for a positive index set.
fn sample_negatives(positives: &[usize], negatives: &[usize], ratio: f64, seed: u64) -> Vec<usize> {
    let want = ((positives.len() as f64 * ratio).round() as usize).min(negatives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = negatives.choose_multiple(&mut rng, want).copied().collect();
    picked.sort_unstable();
    picked
}

/// Trains a one-vs-rest classifier given the row indices of the positive class.
pub fn train_one_vs_rest(
    features: &ReviewFeatures,
    label: &str,
    positive: &BTreeSet<usize>,
    n_rows: usize,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<(LinearClassifier, BinaryFit)> {
    if positive.len() < cfg.min_positives {
        return Err(Error::data(format!(
            "category {label}: {} positives, need at least {}",
            positive.len(),
            cfg.min_positives
        )));
    }
    let pos: Vec<usize> = positive.iter().copied().collect();
    let neg_pool: Vec<usize> = (0..n_rows).filter(|i| !positive.contains(i)).collect();
    let neg = sample_negatives(&pos, &neg_pool, cfg.neg_ratio, seed);
    let idx: Vec<usize> = pos.iter().chain(neg.iter()).copied().collect();
    let rows: Vec<&[(usize, f64)]> = idx.iter().map(|&i| features.row(i)).collect();
    let labels: Vec<f64> = pos
        .iter()
        .map(|_| 1.0)
        .chain(neg.iter().map(|_| -1.0))
        .collect();
    let fit = fit_binary(
        &rows,
        &labels,
        features.space.len(),
        cfg.reg_strength,
        cfg.max_epochs,
        cfg.tolerance,
    );
    let weights = fit
        .weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(j, &w)| (features.space.feature(j).to_string(), w))
        .collect();
    let clf = LinearClassifier {
        label: label.to_string(),
        weights,
        bias: fit.bias,
        converged: fit.converged,
        epochs: fit.epochs,
    };
    Ok((clf, fit))
}

/// Category-vs-rest classifier with negatives drawn from reviews lacking the category.
pub fn train_category_classifier(
    corpus: &Corpus,
    features: &ReviewFeatures,
    category: &str,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<LinearClassifier> {
    let positive: BTreeSet<usize> = corpus
        .reviews()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.categories.contains(category))
        .map(|(i, _)| i)
        .collect();
    train_one_vs_rest(features, category, &positive, corpus.len(), cfg, seed).map(|(c, _)| c)
}

/// Per-category seed derived from a base seed.
pub fn category_seed(base: u64, category: &str) -> u64 {
    category
        .bytes()
        .fold(base ^ 0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Trains one classifier per category label in the corpus.
pub fn train_all_categories(
    corpus: &Corpus,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<Vec<LinearClassifier>> {
    let features = ReviewFeatures::new(corpus);
    corpus
        .categories()
        .iter()
        .map(|c| train_category_classifier(corpus, &features, c, cfg, category_seed(seed, c)))
        .collect()
}

/// Categories whose decision value exceeds `threshold`.
pub fn predict_categories(classifiers: &[LinearClassifier], text: &str, threshold: f64) -> BTreeSet<String> {
    classifiers
        .iter()
        .filter(|c| c.decision(text) > threshold)
        .map(|c| c.label.clone())
        .collect()
}
