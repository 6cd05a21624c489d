//! Beam-search generation with control-token prompts.

mod beam;
mod summarize;

pub use beam::{
    beam_search, greedy_decode, has_repeated_trigram, length_penalty, DecodeConfig, Hypothesis, ModelScorer, Scorer,
    TraceStep,
};
pub use summarize::{encode_inputs, generate, select_entity_inputs, EntitySummary, InputSelection, Summarizer};
