//! Regenerates the bundled mini corpus, or writes a variant with another seed.
//!
//!     cargo run --example synthetic_corpus -- data/mini_corpus.jsonl [seed]

use revsum::corpus::Corpus;
use revsum::synthetic::{mini_corpus, planted_marker, MINI_SEED};

fn main() -> revsum::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next();
    let seed = args.next().map_or(MINI_SEED, |s| s.parse().expect("seed must be an integer"));
    let corpus = Corpus::new(mini_corpus(seed))?;
    for cat in corpus.categories() {
        println!("{cat}: planted marker \"{}\"", planted_marker(&cat).unwrap_or("-"));
    }
    println!("{} reviews, {} entities", corpus.len(), corpus.num_entities());
    println!("example: {}", corpus.reviews()[0].text);
    if let Some(p) = path {
        corpus.write_jsonl(p.as_ref())?;
        println!("wrote {p}");
    }
    Ok(())
}
