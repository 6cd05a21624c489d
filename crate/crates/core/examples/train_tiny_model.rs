//! Overfits a small summarizer on ten mini-corpus pairs, writing the
//! training log and checkpoints, then reloads the best checkpoint.
//!
//!     cargo run --release --example train_tiny_model [steps] [out_dir]

use std::path::PathBuf;

use revsum::model::{load_checkpoint, Combination, Transformer};
use revsum::synthetic::{MiniFixture, MINI_SEED};
use revsum::training::{perplexity, train_model, TrainOutput};

fn main() -> revsum::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(600, |s| s.parse().expect("steps"));
    let dir = args.next().map_or_else(|| std::env::temp_dir().join("revsum_tiny"), PathBuf::from);

    let fx = MiniFixture::build(MINI_SEED)?;
    let pairs = fx.keyword_rich_pairs(10, 8);
    let examples = fx.examples(&pairs)?;
    let mut model = Transformer::<f32>::new(fx.model_config(Combination::Parallel), 3)?;
    println!("{} parameters, {} examples", model.params().num_scalars(), examples.len());
    let out = TrainOutput {
        dir: dir.clone(),
        vocab_hash: fx.vocab.hash(),
    };
    let outcome = train_model(&mut model, &examples, &examples, &MiniFixture::train_config(steps, 1), Some(&out))?;
    for row in outcome.history.iter().filter(|r| r.valid_ppl.is_some()) {
        println!("step {:>5}  loss {:.4}  ppl {:.4}", row.step, row.loss, row.valid_ppl.unwrap_or(f64::NAN));
    }
    let (reloaded, header) = load_checkpoint::<f32>(&out.best_path(), Some(&fx.vocab.hash()))?;
    println!(
        "best checkpoint: step {}, perplexity {:.4}, written to {}",
        header.step,
        perplexity(&reloaded, &examples)?,
        dir.display()
    );
    Ok(())
}
