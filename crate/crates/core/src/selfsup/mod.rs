//! Self-supervised pair construction: every candidate target review is
//! paired with the `k` same-entity reviews most similar to it.

mod pairs;
mod tfidf;

pub use pairs::{
    build_pairs, pairs_by_entity, read_pairs, select_inputs, top_k, write_pairs, Candidate,
    PairBuilderConfig, TrainingPair,
};
pub use tfidf::{dot, fit_tfidf, SparseVec, TfidfModel};
