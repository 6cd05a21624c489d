//! Turning training pairs into token-level examples and length-bucketed batches.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::control::{augment_review, ControlLexicon, MAX_INFERRED};
use crate::corpus::Corpus;
use crate::error::Result;
use crate::model::SeqExample;
use crate::selfsup::TrainingPair;
use crate::tokenizer::{SubwordVocab, BOS, EOS};

/// Builds the teacher-forced example for one pair.
///
/// Every input and the target carry their own control prefix (polarity,
/// categories, inferred n-grams, separator). The decoder input is BOS plus
/// the target without its final token; targets end with EOS.
pub fn build_example(
    pair: &TrainingPair,
    corpus: &Corpus,
    lexicon: &ControlLexicon,
    vocab: &SubwordVocab,
    max_source_len: usize,
    max_target_len: usize,
    mask_prompt: bool,
) -> Result<SeqExample> {
    let (target, inputs) = pair.resolve(corpus)?;
    let cats = corpus.entity_categories(&pair.entity_id);
    let sources = inputs
        .iter()
        .map(|r| {
            let mut ids = augment_review(r, &cats, lexicon, MAX_INFERRED).encode(vocab)?;
            ids.truncate(max_source_len);
            Ok(ids)
        })
        .collect::<Result<Vec<_>>>()?;
    let aug = augment_review(target, &cats, lexicon, MAX_INFERRED);
    let prompt_len = aug.prompt().encode(vocab)?.len();
    let mut tgt = aug.encode(vocab)?;
    tgt.truncate(max_target_len - 1);
    tgt.push(EOS);
    let mut input = Vec::with_capacity(tgt.len());
    input.push(BOS);
    input.extend_from_slice(&tgt[..tgt.len() - 1]);
    let loss_mask = (0..tgt.len()).map(|i| !mask_prompt || i >= prompt_len).collect();
    Ok(SeqExample {
        sources,
        input,
        target: tgt,
        loss_mask,
    })
}

/// Batches of example indices: sorted by target length, cut into chunks of
/// `batch_size`, then the chunk order is shuffled.
pub fn length_buckets(examples: &[SeqExample], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.sort_by_key(|&i| (examples[i].target.len(), i));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ex(len: usize) -> SeqExample {
        SeqExample {
            sources: vec![vec![5]],
            input: vec![1; len],
            target: vec![2; len],
            loss_mask: vec![true; len],
        }
    }

    #[test]
    fn buckets_cover_every_example_once() {
        let exs: Vec<SeqExample> = [5, 3, 9, 1, 7, 2, 8].iter().map(|&l| ex(l)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = length_buckets(&exs, 3, &mut rng);
        let mut all: Vec<usize> = b.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
        for batch in &b {
            let lens: Vec<usize> = batch.iter().map(|&i| exs[i].target.len()).collect();
            assert!(lens.windows(2).all(|w| w[0] <= w[1]));
        }
        let mut rng2 = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(b, length_buckets(&exs, 3, &mut rng2));
    }
}
