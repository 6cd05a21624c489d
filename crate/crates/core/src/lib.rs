pub mod cli;
pub mod control;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod selfsup;
pub mod synthetic;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
