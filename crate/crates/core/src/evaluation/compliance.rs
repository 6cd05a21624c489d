//! Does the decoder follow the keyword tokens it is prompted with?

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{augment_review, polarity_token, AugmentedReview, ControlLexicon, ControlPrompt, MAX_INFERRED};
use crate::corpus::Corpus;
use crate::decoding::{encode_inputs, generate, DecodeConfig};
use crate::error::{Error, Result};
use crate::model::{Real, Transformer};
use crate::selfsup::TrainingPair;
use crate::tokenizer::{ngram_set, SubwordVocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplianceConfig {
    /// Reviews (pair targets) to evaluate.
    pub n_reviews: usize,
    /// Prompts drawn per review and condition.
    pub repeats: usize,
    /// Keyword tokens per prompt.
    pub tokens_per_prompt: usize,
    pub decode: DecodeConfig,
}

impl Default for ComplianceConfig {
    fn default() -> Self {
        ComplianceConfig {
            n_reviews: 20,
            repeats: 5,
            tokens_per_prompt: 8,
            decode: DecodeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    /// Per generation: fraction of prompted n-grams found in the output.
    pub correct: Vec<f64>,
    pub incorrect: Vec<f64>,
    pub reviews_used: usize,
    /// Reviews with too few present (or absent) lexicon n-grams.
    pub skipped: usize,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl ComplianceReport {
    pub fn mean_correct(&self) -> f64 {
        mean(&self.correct)
    }

    pub fn mean_incorrect(&self) -> f64 {
        mean(&self.incorrect)
    }

    pub fn difference(&self) -> f64 {
        self.mean_correct() - self.mean_incorrect()
    }

    /// Share of generations that contain more than half of their prompt.
    pub fn share_above_half(values: &[f64]) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        values.iter().filter(|&&f| f > 0.5).count() as f64 / values.len() as f64
    }

    pub fn render(&self) -> String {
        format!(
            "condition\tgenerations\tmean\t>50%\n\
             correct\t{}\t{:.4}\t{:.4}\n\
             incorrect\t{}\t{:.4}\t{:.4}\n\
             difference\t\t{:.4}\n\
             reviews used {}, skipped {}\n",
            self.correct.len(),
            self.mean_correct(),
            Self::share_above_half(&self.correct),
            self.incorrect.len(),
            self.mean_incorrect(),
            Self::share_above_half(&self.incorrect),
            self.difference(),
            self.reviews_used,
            self.skipped
        )
    }
}

/// Fraction of `ngrams` occurring in `text`.
pub fn prompt_coverage(ngrams: &[String], text: &str) -> f64 {
    if ngrams.is_empty() {
        return 0.0;
    }
    let present = ngram_set(text);
    ngrams.iter().filter(|g| present.contains(*g)).count() as f64 / ngrams.len() as f64
}

/// For each sampled pair, prompts the decoder with keyword n-grams drawn from
/// the lexicon entries present in the target review (correct) or absent from
/// both the target and its inputs (incorrect), keeping the target's polarity
/// and categories, and records how many of them reach the output.
pub fn control_compliance<T: Real>(
    model: &Transformer<T>,
    vocab: &SubwordVocab,
    corpus: &Corpus,
    pairs: &[TrainingPair],
    lexicon: &ControlLexicon,
    cfg: &ComplianceConfig,
    seed: u64,
) -> Result<ComplianceReport> {
    if cfg.tokens_per_prompt == 0 || cfg.repeats == 0 {
        return Err(Error::config("compliance needs at least one token and one repeat"));
    }
    let weights = lexicon.all_ngrams();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<&TrainingPair> = pairs.iter().collect();
    order.shuffle(&mut rng);
    let mut report = ComplianceReport::default();
    let by_weight = |mut v: Vec<String>| {
        v.sort_by(|a, b| weights[b.as_str()].total_cmp(&weights[a.as_str()]).then_with(|| a.cmp(b)));
        v
    };
    for pair in order {
        if report.reviews_used == cfg.n_reviews {
            break;
        }
        let (target, inputs) = pair.resolve(corpus)?;
        let in_target = ngram_set(&target.text);
        let mut in_inputs = BTreeSet::new();
        for r in &inputs {
            in_inputs.extend(ngram_set(&r.text));
        }
        let present: Vec<&str> = weights.keys().copied().filter(|g| in_target.contains(*g)).collect();
        let absent: Vec<&str> = weights
            .keys()
            .copied()
            .filter(|g| !in_target.contains(*g) && !in_inputs.contains(*g))
            .collect();
        if present.len() < cfg.tokens_per_prompt || absent.len() < cfg.tokens_per_prompt {
            report.skipped += 1;
            continue;
        }
        let cats = corpus.entity_categories(&pair.entity_id);
        let augmented: Vec<AugmentedReview> = inputs
            .iter()
            .map(|r| augment_review(r, &cats, lexicon, MAX_INFERRED))
            .collect();
        let sources = encode_inputs(&augmented, vocab, model.config().max_positions)?;
        let base = augment_review(target, &cats, lexicon, MAX_INFERRED);
        for _ in 0..cfg.repeats {
            for (pool, sink) in [(&present, &mut report.correct), (&absent, &mut report.incorrect)] {
                let drawn: Vec<String> = pool
                    .choose_multiple(&mut rng, cfg.tokens_per_prompt)
                    .map(|g| g.to_string())
                    .collect();
                let prompt = ControlPrompt {
                    polarity: polarity_token(&[target.rating])?,
                    categories: base.categories.clone(),
                    inferred: by_weight(drawn),
                };
                let hyp = generate(model, vocab, &sources, &prompt, &cfg.decode, None)?;
                sink.push(prompt_coverage(&prompt.inferred, &vocab.decode(&hyp.tokens)?));
            }
        }
        report.reviews_used += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_counts_ngrams() {
        let g = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(prompt_coverage(&g(&["cold brew", "tea"]), "Their cold brew rocks"), 0.5);
        assert_eq!(prompt_coverage(&g(&["brew cold"]), "cold brew"), 0.0);
        assert_eq!(prompt_coverage(&[], "x"), 0.0);
    }

    #[test]
    fn summary_statistics() {
        let r = ComplianceReport {
            correct: vec![1.0, 0.5, 0.75],
            incorrect: vec![0.0, 0.25, 0.0],
            reviews_used: 1,
            skipped: 2,
        };
        assert!((r.mean_correct() - 0.75).abs() < 1e-15);
        assert!((r.difference() - (0.75 - 0.25 / 3.0)).abs() < 1e-15);
        assert!((ComplianceReport::share_above_half(&r.correct) - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.render().contains("skipped 2"));
    }
}
