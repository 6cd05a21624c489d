//! Subword vocabulary for the neural model and word n-gram features for the
//! linear classifiers and tf-idf.

mod bpe;
mod words;

pub use bpe::{
    train_subword_vocab, SubwordVocab, BOS, EOS, PAD, RESERVED, SEP, UNK, WORD_BOUNDARY,
};
pub use words::{extract_ngrams, ngram_set, ngrams_of, words, NgramCounts, NgramFeatureSpace, NgramOrders};
