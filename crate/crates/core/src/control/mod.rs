//! Control tokens: metadata tokens (polarity, categories), n-gram tokens
//! mined from sparse linear classifiers, review augmentation and
//! inference-time prompts.

mod classifier;
mod lexicon;
mod prompt;

pub use classifier::{
    category_seed, fit_binary, objective, predict_categories, train_all_categories,
    train_category_classifier, train_one_vs_rest, BinaryFit, ClassifierConfig, LinearClassifier,
    ReviewFeatures,
};
pub use lexicon::{extract_lexicon, ControlLexicon};
pub use prompt::{
    all_control_tokens, augment_review, category_token, infer_prompt, keyword_token,
    polarity_token, AugmentedReview, ControlPrompt, MAX_INFERRED,
};

use std::path::Path;

use crate::error::{Error, Result};

pub fn save_classifiers(path: &Path, classifiers: &[LinearClassifier]) -> Result<()> {
    let text = serde_json::to_string_pretty(classifiers).map_err(|e| Error::data(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_classifiers(path: &Path) -> Result<Vec<LinearClassifier>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}
