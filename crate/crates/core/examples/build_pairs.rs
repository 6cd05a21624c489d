//! Turns unlabeled reviews into (inputs, target) training pairs: each
//! target is paired with its k most similar same-entity reviews.
//!
//!     cargo run --example build_pairs

use revsum::corpus::Corpus;
use revsum::selfsup::{build_pairs, fit_tfidf, select_inputs, PairBuilderConfig};
use revsum::synthetic::{mini_corpus, MINI_SEED};

fn main() -> revsum::Result<()> {
    let corpus = Corpus::new(mini_corpus(MINI_SEED))?;
    let tfidf = fit_tfidf(&corpus)?;
    let cfg = PairBuilderConfig::default();

    let reviews = corpus.entity_reviews("e00");
    let target = reviews[0];
    let (inputs, relevance) = select_inputs(&tfidf, target, &reviews[1..], cfg.k)?;
    println!("target {}: {}", target.review_id, target.text);
    for id in &inputs {
        println!("  {id}  sim {:.3}", tfidf.cosine_sim(&target.text, &corpus.get(id).expect("known id").text));
    }
    println!("relevance {relevance:.3}\n");

    let pairs = build_pairs(&corpus, &tfidf, &cfg)?;
    println!(
        "{} pairs; {} per entity of {} reviews",
        pairs.len(),
        cfg.targets_for(12),
        12
    );
    for p in pairs.iter().take(5) {
        println!("  {} <- {:?} ({:.3})", p.target_review_id, p.input_review_ids, p.relevance);
    }
    Ok(())
}
