use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tfidf::{dot, SparseVec, TfidfModel};
use crate::corpus::{Corpus, Review};
use crate::error::{Error, Result};

/// A pseudo-summary target and the `k` same-entity reviews it summarizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub target_review_id: String,
    /// Sorted by review id.
    pub input_review_ids: Vec<String>,
    /// Sum of target/input similarities.
    pub relevance: f64,
    pub entity_id: String,
    /// Position of this target among its entity's candidates (0 = best).
    pub entity_rank: usize,
}

impl TrainingPair {
    /// Looks up the target and input reviews in `corpus`.
    pub fn resolve<'c>(&self, corpus: &'c Corpus) -> Result<(&'c Review, Vec<&'c Review>)> {
        let find = |id: &str| {
            corpus
                .get(id)
                .ok_or_else(|| Error::data(format!("pair references unknown review {id}")))
        };
        let target = find(&self.target_review_id)?;
        let inputs = self
            .input_review_ids
            .iter()
            .map(|id| find(id))
            .collect::<Result<Vec<_>>>()?;
        Ok((target, inputs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairBuilderConfig {
    /// Input-set size.
    pub k: usize,
    /// Fraction of an entity's reviews kept as targets.
    pub top_fraction: f64,
    /// Per-entity cap on targets.
    pub max_targets: usize,
}

impl Default for PairBuilderConfig {
    fn default() -> Self {
        Self::yelp()
    }
}

impl PairBuilderConfig {
    pub fn yelp() -> Self {
        PairBuilderConfig {
            k: 8,
            top_fraction: 0.15,
            max_targets: 100,
        }
    }

    pub fn rotten_tomatoes() -> Self {
        PairBuilderConfig {
            k: 8,
            top_fraction: 0.01,
            max_targets: 150,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::config("top_fraction must lie in (0,1]"));
        }
        if self.max_targets == 0 {
            return Err(Error::config("max_targets must be at least 1"));
        }
        Ok(())
    }

    /// min(ceil(p * n), T) for an entity with `n` reviews.
    pub fn targets_for(&self, n: usize) -> usize {
        // the epsilon keeps 0.15 * 20 from rounding up to 4
        let scaled = (self.top_fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
        scaled.min(self.max_targets)
    }
}

/// Similarity of each pool member to the target, by review id.
pub struct Candidate<'a> {
    pub review_id: &'a str,
    pub sim: f64,
}

/// Top-`k` candidates by similarity (ties: smaller review id first);
/// returns ids sorted by review id and the summed similarity.
pub fn top_k(mut pool: Vec<Candidate<'_>>, k: usize) -> Result<(Vec<String>, f64)> {
    if pool.len() < k {
        return Err(Error::data(format!(
            "pool of {} reviews is smaller than k = {k}",
            pool.len()
        )));
    }
    pool.sort_by(|a, b| {
        b.sim
            .partial_cmp(&a.sim)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.review_id.cmp(b.review_id))
    });
    pool.truncate(k);
    let relevance = pool.iter().map(|c| c.sim).sum();
    let mut ids: Vec<String> = pool.into_iter().map(|c| c.review_id.to_string()).collect();
    ids.sort();
    Ok((ids, relevance))
}

/// Chooses the `k` reviews of `pool` maximizing total similarity to `target`.
pub fn select_inputs(
    model: &TfidfModel,
    target: &Review,
    pool: &[&Review],
    k: usize,
) -> Result<(Vec<String>, f64)> {
    let tv = model.vector(&target.text);
    let cands = pool
        .iter()
        .filter(|r| r.review_id != target.review_id)
        .map(|r| Candidate {
            review_id: &r.review_id,
            sim: dot(&tv, &model.vector(&r.text)),
        })
        .collect();
    top_k(cands, k)
}

/// Builds self-supervised pairs for every entity with more than `k` reviews.
///
/// Within an entity, targets are ranked by relevance and the best
/// `min(ceil(p n), T)` are kept; the result is sorted by relevance
/// (descending), then target id.
pub fn build_pairs(corpus: &Corpus, model: &TfidfModel, cfg: &PairBuilderConfig) -> Result<Vec<TrainingPair>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for entity in corpus.entities() {
        let reviews = corpus.entity_reviews(entity);
        if reviews.len() <= cfg.k {
            continue;
        }
        let vectors: Vec<SparseVec> = reviews.iter().map(|r| model.vector(&r.text)).collect();
        let mut scored = Vec::with_capacity(reviews.len());
        for (t, target) in reviews.iter().enumerate() {
            let pool = reviews
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != t)
                .map(|(j, r)| Candidate {
                    review_id: &r.review_id,
                    sim: dot(&vectors[t], &vectors[j]),
                })
                .collect();
            let (inputs, relevance) = top_k(pool, cfg.k)?;
            scored.push(TrainingPair {
                target_review_id: target.review_id.clone(),
                input_review_ids: inputs,
                relevance,
                entity_id: entity.to_string(),
                entity_rank: 0,
            });
        }
        scored.sort_by(|a, b| by_relevance(a, b));
        scored.truncate(cfg.targets_for(reviews.len()));
        for (rank, p) in scored.iter_mut().enumerate() {
            p.entity_rank = rank;
        }
        out.extend(scored);
    }
    out.sort_by(by_relevance);
    Ok(out)
}

fn by_relevance(a: &TrainingPair, b: &TrainingPair) -> Ordering {
    b.relevance
        .partial_cmp(&a.relevance)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.target_review_id.cmp(&b.target_review_id))
}

pub fn write_pairs(path: &Path, pairs: &[TrainingPair]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        let line = serde_json::to_string(p).map_err(|e| Error::data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pairs(path: &Path) -> Result<Vec<TrainingPair>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

/// Pairs grouped by entity, preserving order.
pub fn pairs_by_entity(pairs: &[TrainingPair]) -> BTreeMap<&str, Vec<&TrainingPair>> {
    let mut m: BTreeMap<&str, Vec<&TrainingPair>> = BTreeMap::new();
    for p in pairs {
        m.entry(p.entity_id.as_str()).or_default().push(p);
    }
    m
}
