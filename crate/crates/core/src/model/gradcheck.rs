//! Finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{Graph, ParamGrads};
use super::transformer::{Combination, Mode, ModelConfig, SeqExample, Transformer};
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Small configuration used for gradient checking.
pub fn gradcheck_config(combination: Combination) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 16,
        dropout: 0.0,
        vocab_size: 13,
        max_positions: 16,
        combination,
        num_sources: 2,
    }
}

/// A fixed two-source example over a 13-token vocabulary.
pub fn gradcheck_example() -> SeqExample {
    SeqExample {
        sources: vec![vec![5, 6, 7, 8, 2], vec![9, 10, 11, 2]],
        input: vec![1, 5, 9, 12],
        target: vec![5, 9, 12, 2],
        loss_mask: vec![true; 4],
    }
}

fn loss(model: &Transformer<f64>, ex: &SeqExample) -> f64 {
    let mut g = Graph::new(model.params());
    let l = model.example_loss(&mut g, ex, &mut Mode::Eval);
    g.value(l).get(0, 0)
}

/// Compares analytic gradients with central differences on `num_coords`
/// randomly chosen parameter coordinates.
pub fn grad_check(
    model: &Transformer<f64>,
    ex: &SeqExample,
    num_coords: usize,
    step: f64,
    floor: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    model.check_example(ex)?;
    let mut grads = ParamGrads::zeros_like(model.params());
    {
        let mut g = Graph::new(model.params());
        let l = model.example_loss(&mut g, ex, &mut Mode::Eval);
        g.backward(l, 1.0, &mut grads);
    }
    let store = model.params();
    let offsets: Vec<usize> = store
        .values()
        .iter()
        .scan(0, |acc, m| {
            let o = *acc;
            *acc += m.data().len();
            Some(o)
        })
        .collect();
    let total = store.num_scalars();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, total, num_coords.min(total)).into_vec();
    picks.sort_unstable();

    let mut probe = model.clone();
    let mut entries = Vec::with_capacity(picks.len());
    for flat in picks {
        let p = offsets.partition_point(|&o| o <= flat) - 1;
        let i = flat - offsets[p];
        let orig = store.values()[p].data()[i];
        probe.params_mut().values_mut()[p].data_mut()[i] = orig + step;
        let up = loss(&probe, ex);
        probe.params_mut().values_mut()[p].data_mut()[i] = orig - step;
        let down = loss(&probe, ex);
        probe.params_mut().values_mut()[p].data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let analytic = grads.grads[p].data()[i];
        entries.push(GradCheckEntry {
            param: store.names()[p].clone(),
            index: i,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric, floor),
        });
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { entries, max_rel_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_match_finite_differences() {
        for comb in [Combination::Parallel, Combination::Mean] {
            let m = Transformer::<f64>::new(gradcheck_config(comb), 7).unwrap();
            let r = grad_check(&m, &gradcheck_example(), 300, 1e-4, 1e-6, 7).unwrap();
            let worst = r.entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).unwrap();
            eprintln!("{comb:?}: max rel error {:.3e} at {:?}", r.max_rel_error, worst);
            assert!(r.max_rel_error < 1e-4);
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-8), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-8) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-10, 1e-8) - 1e-2).abs() < 1e-15);
    }
}
