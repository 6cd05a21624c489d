//! Compares the two ways of attending over several encoded reviews and
//! shows that neither depends on the order of the reviews.
//!
//!     cargo run --example multi_source_attention

use revsum::model::{Combination, ModelConfig, Transformer};

fn main() -> revsum::Result<()> {
    let sources = vec![
        vec![5, 6, 7, 8, 9, 2],
        vec![10, 11, 12, 2],
        vec![13, 14, 15, 16, 2],
        vec![6, 9, 17, 2],
    ];
    let mut reversed = sources.clone();
    reversed.reverse();
    let prefix = [1, 5, 10, 13];
    for combination in [Combination::Parallel, Combination::Mean] {
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            d_ff: 32,
            dropout: 0.0,
            vocab_size: 20,
            max_positions: 32,
            combination,
            num_sources: 4,
        };
        let model = Transformer::<f64>::new(cfg, 11)?;
        let a = model.decoder_forward(&model.encode_sources(&sources)?, &prefix)?;
        let b = model.decoder_forward(&model.encode_sources(&reversed)?, &prefix)?;
        let diff = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        println!(
            "{combination:?}: logits {}x{}, first row {:.4?}, max change under source reversal {diff:.2e}",
            a.rows(),
            a.cols(),
            &a.row(0)[..4]
        );
    }
    Ok(())
}
