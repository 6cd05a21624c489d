//! ROUGE-N / ROUGE-L F-scores and distinct-n-gram ratios over word tokens.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{ngrams_of, words};

fn f_score(overlap: f64, cand: usize, reference: usize) -> f64 {
    if cand == 0 || reference == 0 || overlap == 0.0 {
        return 0.0;
    }
    let p = overlap / cand as f64;
    let r = overlap / reference as f64;
    2.0 * p * r / (p + r)
}

fn counts(ws: &[String], n: usize) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for g in ngrams_of(ws, n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Clipped n-gram overlap F-score.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    let (c, r) = (words(candidate), words(reference));
    let (cc, rc) = (counts(&c, n), counts(&r, n));
    let overlap: usize = cc.iter().map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0))).sum();
    f_score(overlap as f64, c.len().saturating_sub(n - 1), r.len().saturating_sub(n - 1))
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Longest-common-subsequence F-score.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (words(candidate), words(reference));
    f_score(lcs_len(&c, &r) as f64, c.len(), r.len())
}

/// Distinct-n ratios for n = 1, 2, 3; `None` where every summary is shorter
/// than n words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistScores {
    /// Mean over summaries of the per-summary ratio.
    pub summary_level: [Option<f64>; 3],
    /// Ratio over the n-grams of all summaries pooled.
    pub corpus_level: [Option<f64>; 3],
}

/// Summary-level mean and pooled Dist-n. Summaries shorter than `n` words
/// are skipped.
pub fn dist_n<S: AsRef<str>>(summaries: &[S], n: usize) -> Result<(f64, f64)> {
    let mut ratios = Vec::new();
    let mut pooled = BTreeSet::new();
    let mut total = 0usize;
    for s in summaries {
        let grams = ngrams_of(&words(s.as_ref()), n);
        if grams.is_empty() {
            continue;
        }
        let distinct: BTreeSet<&String> = grams.iter().collect();
        ratios.push(distinct.len() as f64 / grams.len() as f64);
        total += grams.len();
        pooled.extend(grams);
    }
    if ratios.is_empty() {
        return Err(Error::data(format!("every summary is shorter than {n} words")));
    }
    Ok((ratios.iter().sum::<f64>() / ratios.len() as f64, pooled.len() as f64 / total as f64))
}

/// Dist-1..3; errors only when no summary has a single word.
pub fn dist_metrics<S: AsRef<str>>(summaries: &[S]) -> Result<DistScores> {
    let mut scores = DistScores {
        summary_level: [None; 3],
        corpus_level: [None; 3],
    };
    for n in 1..=3 {
        match dist_n(summaries, n) {
            Ok((s, c)) => {
                scores.summary_level[n - 1] = Some(s);
                scores.corpus_level[n - 1] = Some(c);
            }
            Err(e) if n == 1 => return Err(e),
            Err(_) => {}
        }
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_n("the cat", "the cat", 1), 1.0);
        assert!((rouge_n("the cat", "the cat sat", 1) - 0.8).abs() < 1e-12);
        assert_eq!(rouge_n("dog runs", "the cat", 1), 0.0);
        assert!((rouge_l("a b c d", "a c b d") - 0.75).abs() < 1e-12);
        assert_eq!(rouge_l("", "a b"), 0.0);
        assert_eq!(rouge_l("x y", "x y"), 1.0);
        assert_eq!(rouge_n("a", "a", 2), 0.0);
    }

    #[test]
    fn clipping() {
        // "the" appears three times in the candidate but once in the reference.
        let f = rouge_n("the the the", "the cat", 1);
        let (p, r) = (1.0 / 3.0, 0.5);
        assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-12);
    }

    #[test]
    fn dist_examples() {
        let (s, _) = dist_n(&["a a a"], 1).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-15);
        let d = dist_metrics(&["x y", "x y"]).unwrap();
        assert_eq!(d.summary_level[0], Some(1.0));
        assert_eq!(d.corpus_level[0], Some(0.5));
        assert_eq!(d.summary_level[2], None);
        assert!(dist_n(&["a b", "c"], 3).is_err());
        assert!(dist_metrics(&["", "..."]).is_err());
        let d = dist_metrics(&["one two three four"]).unwrap();
        assert_eq!(d.summary_level, [Some(1.0); 3]);
        // "c" is skipped for n = 2
        assert_eq!(dist_n(&["a b", "c"], 2).unwrap(), (1.0, 1.0));
    }
}
