//! Learns a subword vocabulary on the mini corpus, adds atomic control
//! tokens and round-trips a review through encode/decode.
//!
//!     cargo run --example subword_vocab

use revsum::corpus::Corpus;
use revsum::synthetic::{mini_corpus, MINI_SEED};
use revsum::tokenizer::{train_subword_vocab, SEP};

fn main() -> revsum::Result<()> {
    let corpus = Corpus::new(mini_corpus(MINI_SEED))?;
    let texts: Vec<&str> = corpus.reviews().iter().map(|r| r.text.as_str()).collect();
    let mut vocab = train_subword_vocab(&texts, 600)?;
    println!("{} tokens after {} merges", vocab.len(), vocab.merges().len());
    for (a, b) in vocab.merges().iter().take(8) {
        println!("  merge {a:?} + {b:?}");
    }

    let text = &corpus.reviews()[3].text;
    let ids = vocab.encode(text);
    let pieces: Vec<&str> = ids.iter().filter_map(|&i| vocab.token(i)).collect();
    println!("\n{text}\n{} subwords: {}", ids.len(), pieces.join(" | "));
    assert_eq!(&vocab.decode(&ids)?, text);

    // Control tokens are atomic and never split by the merges.
    let ctrl = vocab.register_control_tokens(["<POL_4.5>", "<CAT_Pizzeria>", "<KW_wood fired>"]);
    let mut prompt = ctrl.clone();
    prompt.push(SEP);
    println!("\ncontrol ids {ctrl:?}; decode(prompt) = {:?}", vocab.decode(&prompt)?);
    println!("banned during generation: {} ids", vocab.non_text_ids().len());
    Ok(())
}
