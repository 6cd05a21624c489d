//! Deterministic synthetic review corpus with planted category markers and
//! sentiment words, small enough for every pipeline stage to run offline.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{extract_lexicon, train_all_categories, all_control_tokens, ClassifierConfig, ControlLexicon, LinearClassifier};
use crate::corpus::{Corpus, Review};
use crate::error::Result;
use crate::model::{Combination, ModelConfig, SeqExample};
use crate::selfsup::{build_pairs, fit_tfidf, PairBuilderConfig, TrainingPair};
use crate::tokenizer::{ngram_set, train_subword_vocab, SubwordVocab};
use crate::training::{build_example, TrainConfig};

/// A category, its marker bigram and its aspect vocabulary.
pub struct CategorySpec {
    pub name: &'static str,
    pub marker: &'static str,
    pub aspects: [&'static str; 20],
}

pub const MINI_CATEGORIES: [CategorySpec; 3] = [
    CategorySpec {
        name: "Pizzeria",
        marker: "wood fired",
        aspects: [
            "crust", "pepperoni", "mozzarella", "basil", "calzone", "marinara", "garlic", "oregano", "dough",
            "anchovies", "pesto", "meatballs", "tiramisu", "olives", "sausage", "ricotta", "arugula",
            "gnocchi", "lasagna", "focaccia",
        ],
    },
    CategorySpec {
        name: "Coffee Shop",
        marker: "cold brew",
        aspects: [
            "espresso", "latte", "pastry", "croissant", "barista", "beans", "mocha", "muffin", "scone",
            "cappuccino", "roast", "foam", "bagel", "chai", "matcha", "macchiato", "brownie", "waffle",
            "americano", "cortado",
        ],
    },
    CategorySpec {
        name: "Hair Salon",
        marker: "blow dry",
        aspects: [
            "stylist", "haircut", "color", "shampoo", "bangs", "highlights", "perm", "trim", "fade", "braids",
            "curls", "conditioner", "manicure", "layers", "balayage", "toner", "keratin", "updo", "extensions",
            "pedicure",
        ],
    },
];

const POSITIVE: [&str; 4] = ["great", "excellent", "perfect", "lovely"];
const NEGATIVE: [&str; 4] = ["awful", "bland", "terrible", "sloppy"];
const NEUTRAL: [&str; 3] = ["fine", "average", "decent"];

/// Sentences shared by every category; they reuse the words of the markers
/// so that only the marker bigrams are category specific.
const FILLER: [&str; 8] = [
    "The wood tables are nice.",
    "The staff was fired up.",
    "It was cold outside.",
    "My friend likes to brew beer.",
    "The wind can blow hard here.",
    "The parking lot was dry.",
    "We came on a weekday.",
    "Parking was easy to find.",
];

const MARKER_FRAMES: [&str; 4] = [
    "{} is why we come.",
    "We tried their {} special.",
    "Ask for the {} menu.",
    "Get a {} next time.",
];

/// Entities per category.
pub const MINI_ENTITIES_PER_CATEGORY: usize = 20;
pub const MINI_REVIEWS_PER_ENTITY: usize = 12;
/// Aspects an entity is known for.
const SIGNATURE_SIZE: usize = 10;
/// Probability that an aspect mention comes from the entity's own category.
const OWN_ASPECT_RATE: f64 = 0.6;
/// Probability that a review contains its category's marker.
const MARKER_RATE: f64 = 0.75;

fn sentiment_sentence(rating: u8) -> &'static str {
    match rating {
        4 | 5 => "I love this place.",
        3 => "It was okay overall.",
        _ => "I hate this place.",
    }
}

fn adjectives(rating: u8) -> &'static [&'static str] {
    match rating {
        4 | 5 => &POSITIVE,
        3 => &NEUTRAL,
        _ => &NEGATIVE,
    }
}

/// Seed of the corpus bundled under `data/mini_corpus.jsonl`.
pub const MINI_SEED: u64 = 2024;

/// Generates `3 x 20` entities with 12 reviews each.
pub fn mini_corpus(seed: u64) -> Vec<Review> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for e in 0..MINI_CATEGORIES.len() * MINI_ENTITIES_PER_CATEGORY {
        let cat = &MINI_CATEGORIES[e % MINI_CATEGORIES.len()];
        let entity_id = format!("e{e:02}");
        let quality: i32 = rng.gen_range(1..=5);
        let mut signature = cat.aspects.to_vec();
        signature.shuffle(&mut rng);
        signature.truncate(SIGNATURE_SIZE);
        for r in 0..MINI_REVIEWS_PER_ENTITY {
            let rating = (quality + [-1, 0, 0, 1][rng.gen_range(0..4)]).clamp(1, 5) as u8;
            let n_aspects = rng.gen_range(7..=8);
            let mut own = signature.clone();
            own.shuffle(&mut rng);
            let mut mentioned: Vec<&str> = Vec::with_capacity(n_aspects);
            for _ in 0..n_aspects {
                if rng.gen_bool(OWN_ASPECT_RATE) {
                    mentioned.extend(own.pop());
                } else {
                    let other = &MINI_CATEGORIES[(e + rng.gen_range(1..MINI_CATEGORIES.len())) % MINI_CATEGORIES.len()];
                    let a = other.aspects[rng.gen_range(0..other.aspects.len())];
                    if !mentioned.contains(&a) {
                        mentioned.push(a);
                    }
                }
            }
            let adj = adjectives(rating);
            let phrases: Vec<String> = mentioned
                .iter()
                .map(|a| format!("{} {a}", adj[rng.gen_range(0..adj.len())]))
                .collect();
            let (last, rest) = phrases.split_last().expect("at least one aspect");
            let mut list = format!("{} and {last}.", rest.join(", "));
            list[..1].make_ascii_uppercase();
            let mut sentences = vec![sentiment_sentence(rating).to_string(), list];
            if rng.gen_bool(MARKER_RATE) {
                let frame = MARKER_FRAMES[rng.gen_range(0..MARKER_FRAMES.len())];
                let mut m = frame.replacen("{}", cat.marker, 1);
                m[..1].make_ascii_uppercase();
                sentences.push(m);
            }
            sentences.push(FILLER[rng.gen_range(0..FILLER.len())].to_string());
            let tail = sentences.split_off(1);
            let mut body = tail;
            body.shuffle(&mut rng);
            sentences.extend(body);
            out.push(Review {
                review_id: format!("{entity_id}_r{r:02}"),
                entity_id: entity_id.clone(),
                text: sentences.join(" "),
                rating,
                categories: BTreeSet::from([cat.name.to_string()]),
            });
        }
    }
    out
}

/// Marker bigram planted in `category`, if it is one of the mini categories.
pub fn planted_marker(category: &str) -> Option<&'static str> {
    MINI_CATEGORIES.iter().find(|c| c.name == category).map(|c| c.marker)
}

/// Every artifact the pipeline derives from the mini corpus before model
/// training, built in memory with the desk-scale settings.
pub struct MiniFixture {
    pub corpus: Corpus,
    /// Subword vocabulary including the control tokens.
    pub vocab: SubwordVocab,
    pub classifiers: Vec<LinearClassifier>,
    pub lexicon: ControlLexicon,
    pub pairs: Vec<TrainingPair>,
}

impl MiniFixture {
    pub const VOCAB_SIZE: usize = 600;
    pub const MAX_SOURCE_LEN: usize = 64;
    pub const MAX_TARGET_LEN: usize = 80;

    pub fn build(seed: u64) -> Result<MiniFixture> {
        let corpus = Corpus::new(mini_corpus(seed))?;
        let texts: Vec<&str> = corpus.reviews().iter().map(|r| r.text.as_str()).collect();
        let mut vocab = train_subword_vocab(&texts, Self::VOCAB_SIZE)?;
        let classifiers = train_all_categories(&corpus, &ClassifierConfig::default(), seed)?;
        let (lexicon, _) = extract_lexicon(&classifiers);
        let cats = corpus.categories();
        vocab.register_control_tokens(all_control_tokens(cats.iter().map(String::as_str), &lexicon));
        let tfidf = fit_tfidf(&corpus)?;
        let pairs = build_pairs(&corpus, &tfidf, &PairBuilderConfig::default())?;
        Ok(MiniFixture {
            corpus,
            vocab,
            classifiers,
            lexicon,
            pairs,
        })
    }

    /// The first `n` pairs (by relevance) whose target contains at least
    /// `min_keywords` lexicon n-grams.
    pub fn keyword_rich_pairs(&self, n: usize, min_keywords: usize) -> Vec<TrainingPair> {
        let lex = self.lexicon.all_ngrams();
        let ids = self.corpus.id_map();
        self.pairs
            .iter()
            .filter(|p| {
                let present = ngram_set(&ids[p.target_review_id.as_str()].text);
                lex.keys().filter(|g| present.contains(**g)).count() >= min_keywords
            })
            .take(n)
            .cloned()
            .collect()
    }

    pub fn examples(&self, pairs: &[TrainingPair]) -> Result<Vec<SeqExample>> {
        pairs
            .iter()
            .map(|p| {
                build_example(p, &self.corpus, &self.lexicon, &self.vocab, Self::MAX_SOURCE_LEN, Self::MAX_TARGET_LEN, false)
            })
            .collect()
    }

    /// Small model sized for the fixture, dropout off.
    pub fn model_config(&self, combination: Combination) -> ModelConfig {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 128,
            dropout: 0.0,
            vocab_size: self.vocab.len(),
            max_positions: 256,
            combination,
            num_sources: 8,
        }
    }

    pub fn train_config(total_steps: u64, seed: u64) -> TrainConfig {
        TrainConfig {
            lr_base: 0.01,
            warmup_steps: 50,
            total_steps,
            batch_size: 4,
            eval_interval: 100,
            seed,
            max_source_len: Self::MAX_SOURCE_LEN,
            max_target_len: Self::MAX_TARGET_LEN,
            ..TrainConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    #[test]
    fn shape_and_determinism() {
        let a = mini_corpus(11);
        assert_eq!(a.len(), 720);
        assert_eq!(a, mini_corpus(11));
        let c = Corpus::new(a).unwrap();
        assert_eq!(c.num_entities(), 60);
        assert_eq!(c.categories().len(), 3);
    }

    #[test]
    fn markers_are_category_exclusive() {
        let reviews = mini_corpus(11);
        for spec in &MINI_CATEGORIES {
            let (inside, outside): (Vec<&Review>, Vec<&Review>) =
                reviews.iter().partition(|r| r.categories.contains(spec.name));
            let rate = inside.iter().filter(|r| r.text.to_lowercase().contains(spec.marker)).count() as f64 / inside.len() as f64;
            assert!((0.6..0.9).contains(&rate), "{rate}");
            assert!(outside.iter().all(|r| !r.text.to_lowercase().contains(spec.marker)));
        }
    }

    #[test]
    fn fixture_artifacts() {
        let f = MiniFixture::build(MINI_SEED).unwrap();
        assert_eq!(f.pairs.len(), 120);
        let rich = f.keyword_rich_pairs(10, 8);
        assert_eq!(rich.len(), 10);
        let ex = f.examples(&rich).unwrap();
        assert!(ex.iter().all(|e| e.sources.len() == 8 && e.target.len() <= MiniFixture::MAX_TARGET_LEN));
    }

    #[test]
    fn sentiment_words_follow_rating() {
        for r in mini_corpus(3) {
            assert_eq!(r.text.contains("love"), r.rating >= 4);
            assert_eq!(r.text.contains("hate"), r.rating <= 2);
        }
    }
}
