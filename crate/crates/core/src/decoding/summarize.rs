//! Entity-level summarization: input selection, prompting, decoding.

use serde::{Deserialize, Serialize};

use super::beam::{beam_search, DecodeConfig, Hypothesis, ModelScorer, TraceStep};
use crate::control::{augment_review, infer_prompt, AugmentedReview, ControlLexicon, ControlPrompt, MAX_INFERRED};
use crate::corpus::{Corpus, Review};
use crate::error::{Error, Result};
use crate::model::{Real, Transformer};
use crate::selfsup::TfidfModel;
use crate::tokenizer::{SubwordVocab, BOS};

/// How the `k` inputs are chosen when an entity has more than `k` reviews.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputSelection {
    /// Highest mean tf-idf similarity to the entity's other reviews.
    Central,
    /// Largest review ids.
    Recent,
}

/// Picks `k` of `reviews`; the result is sorted by review id.
pub fn select_entity_inputs<'a>(
    reviews: &[&'a Review],
    k: usize,
    rule: InputSelection,
    tfidf: &TfidfModel,
) -> Result<Vec<&'a Review>> {
    if k == 0 || reviews.len() < k {
        return Err(Error::data(format!("entity has {} reviews, need {k}", reviews.len())));
    }
    let mut chosen: Vec<&Review> = if reviews.len() == k {
        reviews.to_vec()
    } else {
        match rule {
            InputSelection::Recent => {
                let mut r = reviews.to_vec();
                r.sort_by(|a, b| b.review_id.cmp(&a.review_id));
                r.truncate(k);
                r
            }
            InputSelection::Central => {
                let vecs: Vec<_> = reviews.iter().map(|r| tfidf.vector(&r.text)).collect();
                let mut scored: Vec<(f64, &Review)> = reviews
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let s: f64 = (0..reviews.len())
                            .filter(|&j| j != i)
                            .map(|j| crate::selfsup::dot(&vecs[i], &vecs[j]))
                            .sum();
                        (s / (reviews.len() - 1) as f64, *r)
                    })
                    .collect();
                scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.review_id.cmp(&b.1.review_id)));
                scored.into_iter().take(k).map(|(_, r)| r).collect()
            }
        }
    };
    chosen.sort_by(|a, b| a.review_id.cmp(&b.review_id));
    Ok(chosen)
}

/// Encoder inputs for augmented reviews, truncated to the model's positions.
pub fn encode_inputs(inputs: &[AugmentedReview], vocab: &SubwordVocab, max_len: usize) -> Result<Vec<Vec<u32>>> {
    inputs
        .iter()
        .map(|a| {
            let mut ids = a.encode(vocab)?;
            ids.truncate(max_len);
            Ok(ids)
        })
        .collect()
}

/// Decodes from already encoded inputs under `prompt`.
pub fn generate<T: Real>(
    model: &Transformer<T>,
    vocab: &SubwordVocab,
    sources: &[Vec<u32>],
    prompt: &ControlPrompt,
    cfg: &DecodeConfig,
    trace: Option<&mut Vec<TraceStep>>,
) -> Result<Hypothesis> {
    if vocab.len() != model.config().vocab_size {
        return Err(Error::data(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.len(),
            model.config().vocab_size
        )));
    }
    let mut prefix = vec![BOS];
    prefix.extend(prompt.encode(vocab)?);
    if prefix.len() + cfg.budget > model.config().max_positions {
        return Err(Error::config(format!(
            "prompt of {} tokens plus budget {} exceeds max_positions {}",
            prefix.len(),
            cfg.budget,
            model.config().max_positions
        )));
    }
    let encoded = model.encode_sources(sources)?;
    let scorer = ModelScorer {
        model,
        memory: model.cross_memory(&encoded)?,
    };
    beam_search(&scorer, &prefix, cfg, &vocab.non_text_ids(), trace)
}

/// One generated entity summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySummary {
    pub entity_id: String,
    pub summary: String,
    pub input_review_ids: Vec<String>,
    /// Control tokens the decoder was prompted with.
    pub prompt: Vec<String>,
    /// Held-out review used as the reference, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_review_id: Option<String>,
}

/// Everything needed to summarize entities besides the entity itself.
pub struct Summarizer<'a, T: Real> {
    pub model: &'a Transformer<T>,
    pub vocab: &'a SubwordVocab,
    pub lexicon: &'a ControlLexicon,
    pub tfidf: &'a TfidfModel,
    pub k: usize,
    pub selection: InputSelection,
    pub decode: DecodeConfig,
}

impl<T: Real> Summarizer<'_, T> {
    pub fn summarize_entity(&self, corpus: &Corpus, entity_id: &str) -> Result<EntitySummary> {
        if !corpus.has_entity(entity_id) {
            return Err(Error::data(format!("unknown entity {entity_id}")));
        }
        let reviews = corpus.entity_reviews(entity_id);
        let chosen = select_entity_inputs(&reviews, self.k, self.selection, self.tfidf)?;
        let cats = corpus.entity_categories(entity_id);
        let augmented: Vec<AugmentedReview> = chosen
            .iter()
            .map(|r| augment_review(r, &cats, self.lexicon, MAX_INFERRED))
            .collect();
        let prompt = infer_prompt(&augmented, MAX_INFERRED)?;
        let sources = encode_inputs(&augmented, self.vocab, self.model.config().max_positions)?;
        let hyp = generate(self.model, self.vocab, &sources, &prompt, &self.decode, None)?;
        Ok(EntitySummary {
            entity_id: entity_id.to_string(),
            summary: self.vocab.decode(&hyp.tokens)?,
            input_review_ids: chosen.iter().map(|r| r.review_id.clone()).collect(),
            prompt: prompt.tokens(),
            reference_review_id: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfsup::fit_tfidf;
    use std::collections::BTreeSet;

    fn review(id: &str, text: &str) -> Review {
        Review {
            review_id: id.into(),
            entity_id: "e".into(),
            text: text.into(),
            rating: 4,
            categories: BTreeSet::new(),
        }
    }

    #[test]
    fn selection_rules() {
        let rs = vec![
            review("r1", "good pizza here"),
            review("r2", "good pizza and pasta"),
            review("r3", "odd unrelated words"),
            review("r4", "pizza good good"),
        ];
        let corpus = Corpus::new(rs.clone()).unwrap();
        let tfidf = fit_tfidf(&corpus).unwrap();
        let refs: Vec<&Review> = rs.iter().collect();
        let ids = |v: Vec<&Review>| v.iter().map(|r| r.review_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(select_entity_inputs(&refs, 3, InputSelection::Central, &tfidf).unwrap()), ["r1", "r2", "r4"]);
        assert_eq!(ids(select_entity_inputs(&refs, 2, InputSelection::Recent, &tfidf).unwrap()), ["r3", "r4"]);
        assert_eq!(select_entity_inputs(&refs, 4, InputSelection::Recent, &tfidf).unwrap().len(), 4);
        assert!(select_entity_inputs(&refs, 5, InputSelection::Central, &tfidf).is_err());
    }
}
