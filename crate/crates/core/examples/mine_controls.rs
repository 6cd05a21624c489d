//! Trains one sparse linear classifier per category, keeps the positive
//! weights as a keyword lexicon and annotates a review with control tokens.
//!
//!     cargo run --example mine_controls

use revsum::control::{augment_review, extract_lexicon, infer_prompt, train_all_categories, ClassifierConfig, MAX_INFERRED};
use revsum::corpus::Corpus;
use revsum::synthetic::{mini_corpus, planted_marker, MINI_SEED};

fn main() -> revsum::Result<()> {
    let corpus = Corpus::new(mini_corpus(MINI_SEED))?;
    let classifiers = train_all_categories(&corpus, &ClassifierConfig::default(), 7)?;
    for c in &classifiers {
        println!("{}: {} non-zero weights, {} epochs, converged {}", c.label, c.weights.len(), c.epochs, c.converged);
    }
    let (lexicon, _) = extract_lexicon(&classifiers);
    for (cat, entries) in lexicon.categories() {
        println!("\n{cat} (planted marker {:?})", planted_marker(cat).unwrap_or("-"));
        for (g, w) in entries.iter().take(6) {
            println!("  {w:.4}  {g}");
        }
    }

    let cats = corpus.entity_categories("e01");
    let augmented: Vec<_> = corpus
        .entity_reviews("e01")
        .into_iter()
        .map(|r| augment_review(r, &cats, &lexicon, MAX_INFERRED))
        .collect();
    println!("\n{}\n  -> {}", augmented[0].text, augmented[0].prompt().tokens().join(" "));
    let prompt = infer_prompt(&augmented[..8], MAX_INFERRED)?;
    println!("prompt for 8 inputs: {}", prompt.tokens().join(" "));
    Ok(())
}
