//! Beam search on a hand-written bigram scorer: length normalization,
//! trigram blocking and the beam trace.
//!
//!     cargo run --example beam_search

use revsum::decoding::{beam_search, greedy_decode, has_repeated_trigram, length_penalty, DecodeConfig, Scorer};
use revsum::tokenizer::EOS;

/// Next-token distribution depends only on the previous token.
struct Bigram {
    table: Vec<Vec<f64>>,
}

impl Scorer for Bigram {
    type State = u32;

    fn vocab_size(&self) -> usize {
        self.table.len()
    }

    fn start(&self, prefix: &[u32]) -> revsum::Result<(u32, Vec<f64>)> {
        let last = *prefix.last().expect("non-empty prefix");
        Ok((last, self.table[last as usize].clone()))
    }

    fn advance(&self, state: &mut u32, token: u32) -> revsum::Result<Vec<f64>> {
        *state = token;
        Ok(self.table[token as usize].clone())
    }
}

fn main() -> revsum::Result<()> {
    // 5 -> 6 -> 7 -> 5 loops; ending is always unlikely.
    let v = 9;
    let mut table = vec![vec![(1e-3f64).ln(); v]; v];
    let mut set = |from: usize, to: usize, p: f64| table[from][to] = p.ln();
    set(1, 5, 0.9);
    set(5, 6, 0.8);
    set(6, 7, 0.7);
    set(6, 8, 0.2);
    set(7, 5, 0.9);
    set(8, EOS as usize, 0.5);
    set(7, EOS as usize, 0.05);
    let scorer = Bigram { table };

    println!("length penalty at 13 tokens, alpha 1.2: {:.6}", length_penalty(13, 1.2));
    for block in [false, true] {
        let cfg = DecodeConfig {
            beam_size: 3,
            budget: 12,
            length_penalty: 1.2,
            block_trigrams: block,
        };
        let mut trace = Vec::new();
        let best = beam_search(&scorer, &[1], &cfg, &[0, 1, 3, 4], Some(&mut trace))?;
        let greedy = greedy_decode(&scorer, &[1], cfg.budget, &[0, 1, 3, 4], block)?;
        println!(
            "blocking {block}: beam {:?} (score {:.3}, eos {}, repeated trigram {}); greedy {:?}",
            best.tokens,
            best.score,
            best.ended_with_eos,
            has_repeated_trigram(&best.tokens),
            greedy.tokens
        );
        println!("  {} steps traced; step 0 kept {:?}", trace.len(), trace[0].kept);
    }
    Ok(())
}
