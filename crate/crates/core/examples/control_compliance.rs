//! Overfits a model on keyword-rich mini-corpus pairs, then prompts it with
//! keywords that do or do not occur in each target and counts how many
//! reach the output.
//!
//!     cargo run --release --example control_compliance [steps]

use revsum::decoding::DecodeConfig;
use revsum::evaluation::{control_compliance, ComplianceConfig};
use revsum::model::{Combination, Transformer};
use revsum::synthetic::{MiniFixture, MINI_SEED};
use revsum::training::train_model;

fn main() -> revsum::Result<()> {
    let steps: u64 = std::env::args().nth(1).map_or(600, |s| s.parse().expect("steps"));
    let fx = MiniFixture::build(MINI_SEED)?;
    let pairs = fx.keyword_rich_pairs(10, 8);
    let examples = fx.examples(&pairs)?;
    let mut model = Transformer::<f32>::new(fx.model_config(Combination::Parallel), 3)?;
    let outcome = train_model(&mut model, &examples, &examples, &MiniFixture::train_config(steps, 1), None)?;
    println!("trained {} steps, training perplexity {:.3}", outcome.steps, outcome.best_valid_ppl.unwrap_or(f64::NAN));

    let cfg = ComplianceConfig {
        n_reviews: pairs.len(),
        repeats: 10,
        tokens_per_prompt: 8,
        decode: DecodeConfig {
            beam_size: 2,
            budget: 80,
            ..DecodeConfig::default()
        },
    };
    let report = control_compliance(&model, &fx.vocab, &fx.corpus, &pairs, &fx.lexicon, &cfg, 5)?;
    print!("{}", report.render());
    Ok(())
}
