use std::collections::{BTreeMap, BTreeSet};

use super::lexicon::ControlLexicon;
use crate::corpus::Review;
use crate::error::{Error, Result};
use crate::tokenizer::{ngram_set, SubwordVocab, SEP};

/// Most inferred n-grams attached to one review or prompt.
pub const MAX_INFERRED: usize = 8;

/// Mean rating rounded to the nearest half star (halves round up),
/// e.g. `<POL_4.5>`.
pub fn polarity_token(ratings: &[u8]) -> Result<String> {
    if ratings.is_empty() {
        return Err(Error::data("polarity of an empty rating list"));
    }
    let sum: u64 = ratings.iter().map(|&r| r as u64).sum();
    let n = ratings.len() as u64;
    // nearest integer to 2 * mean, ties upward
    let halves = (4 * sum + n) / (2 * n);
    Ok(format!("<POL_{}.{}>", halves / 2, if halves % 2 == 1 { 5 } else { 0 }))
}

pub fn category_token(category: &str) -> String {
    format!("<CAT_{}>", category.split_whitespace().collect::<Vec<_>>().join("_"))
}

pub fn keyword_token(ngram: &str) -> String {
    format!("<KW_{ngram}>")
}

/// Every control token a model may need: all polarity buckets, the given
/// categories and every lexicon n-gram.
pub fn all_control_tokens<'a>(
    categories: impl IntoIterator<Item = &'a str>,
    lexicon: &ControlLexicon,
) -> Vec<String> {
    let mut out: Vec<String> = (2..=10).map(|h| format!("<POL_{}.{}>", h / 2, if h % 2 == 1 { 5 } else { 0 })).collect();
    let cats: BTreeSet<&str> = categories.into_iter().collect();
    out.extend(cats.into_iter().map(category_token));
    out.extend(lexicon.all_ngrams().keys().map(|g| keyword_token(g)));
    out
}

/// Control prefix fed to the decoder (and attached to every review).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPrompt {
    pub polarity: String,
    /// Category tokens, sorted.
    pub categories: Vec<String>,
    /// Inferred n-grams in rank order.
    pub inferred: Vec<String>,
}

impl ControlPrompt {
    /// Control tokens in serialization order: polarity, categories, inferred.
    pub fn tokens(&self) -> Vec<String> {
        std::iter::once(self.polarity.clone())
            .chain(self.categories.iter().cloned())
            .chain(self.inferred.iter().map(|g| keyword_token(g)))
            .collect()
    }

    /// Token ids of the prompt followed by the separator.
    pub fn encode(&self, vocab: &SubwordVocab) -> Result<Vec<u32>> {
        let mut ids = self
            .tokens()
            .iter()
            .map(|t| {
                vocab
                    .control_id(t)
                    .ok_or_else(|| Error::data(format!("control token {t} missing from vocabulary")))
            })
            .collect::<Result<Vec<u32>>>()?;
        ids.push(SEP);
        Ok(ids)
    }
}

/// A review with its control annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedReview {
    pub review_id: String,
    pub rating: u8,
    pub categories: Vec<String>,
    /// (n-gram, lexicon weight), heaviest first.
    pub inferred: Vec<(String, f64)>,
    pub text: String,
}

impl AugmentedReview {
    /// The review's own prompt: its rating, its entity's categories and its inferred n-grams.
    pub fn prompt(&self) -> ControlPrompt {
        ControlPrompt {
            polarity: polarity_token(&[self.rating]).expect("one rating"),
            categories: self.categories.clone(),
            inferred: self.inferred.iter().map(|(g, _)| g.clone()).collect(),
        }
    }

    /// Prompt ids, separator, then body ids.
    pub fn encode(&self, vocab: &SubwordVocab) -> Result<Vec<u32>> {
        let mut ids = self.prompt().encode(vocab)?;
        ids.extend(vocab.encode(&self.text));
        Ok(ids)
    }
}

/// Attaches metadata tokens and the `max_tokens` heaviest lexicon n-grams
/// (across all of the entity's categories) that occur in the review.
pub fn augment_review(
    review: &Review,
    entity_categories: &BTreeSet<String>,
    lexicon: &ControlLexicon,
    max_tokens: usize,
) -> AugmentedReview {
    let present = ngram_set(&review.text);
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for cat in entity_categories {
        for (g, w) in lexicon.category(cat) {
            if present.contains(g) {
                let e = best.entry(g.as_str()).or_insert(*w);
                *e = e.max(*w);
            }
        }
    }
    let mut ranked: Vec<(String, f64)> = best.into_iter().map(|(g, w)| (g.to_string(), w)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_tokens);
    AugmentedReview {
        review_id: review.review_id.clone(),
        rating: review.rating,
        categories: entity_categories.iter().map(|c| category_token(c)).collect(),
        inferred: ranked,
        text: review.text.clone(),
    }
}

/// Decoder prompt for a set of augmented inputs: the most repeated inferred
/// n-grams (ties: heavier, then lexicographic), the polarity of the mean
/// input rating and the shared categories.
pub fn infer_prompt(inputs: &[AugmentedReview], max_tokens: usize) -> Result<ControlPrompt> {
    if inputs.is_empty() {
        return Err(Error::data("cannot infer a prompt from zero inputs"));
    }
    let mut stats: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for inp in inputs {
        for (g, w) in &inp.inferred {
            let e = stats.entry(g.as_str()).or_insert((0, *w));
            e.0 += 1;
            e.1 = e.1.max(*w);
        }
    }
    let mut ranked: Vec<(&str, usize, f64)> = stats.into_iter().map(|(g, (c, w))| (g, c, w)).collect();
    ranked.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| b.2.total_cmp(&a.2))
            .then_with(|| a.0.cmp(b.0))
    });
    let ratings: Vec<u8> = inputs.iter().map(|r| r.rating).collect();
    let categories: BTreeSet<String> = inputs.iter().flat_map(|r| r.categories.iter().cloned()).collect();
    Ok(ControlPrompt {
        polarity: polarity_token(&ratings)?,
        categories: categories.into_iter().collect(),
        inferred: ranked
            .into_iter()
            .take(max_tokens)
            .map(|(g, _, _)| g.to_string())
            .collect(),
    })
}
