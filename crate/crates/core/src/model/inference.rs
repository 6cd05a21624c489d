//! Incremental decoding with cached self-attention keys/values and
//! precomputed cross-attention memory.

use super::matrix::{layer_norm_rows, matmul, softmax_rows, AttnMask, Matrix, Real};
use super::params::ParamId;
use super::transformer::{Combination, EncodedSource, Transformer};
use crate::error::{Error, Result};

/// Projected encoder keys and values for every decoder layer.
#[derive(Debug, Clone)]
pub struct CrossMemory<T> {
    /// `layers[l]` holds one `(K, V)` per source, or a single averaged pair
    /// for the mean combinations.
    layers: Vec<Vec<(Matrix<T>, Matrix<T>)>>,
}

impl<T> CrossMemory<T> {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

/// Self-attention keys and values of the tokens decoded so far.
#[derive(Debug, Clone)]
pub struct DecoderCache<T> {
    keys: Vec<Matrix<T>>,
    values: Vec<Matrix<T>>,
}

impl<T: Real> DecoderCache<T> {
    /// Number of tokens already consumed.
    pub fn len(&self) -> usize {
        self.keys.first().map_or(0, |k| k.rows())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn row_mean<T: Real>(parts: &[&Matrix<T>], strict: bool) -> Matrix<T> {
    let rows = parts.iter().map(|m| m.rows()).max().unwrap_or(0);
    let cols = parts[0].cols();
    let mut out = Matrix::zeros(rows, cols);
    let mut count = vec![0usize; rows];
    for m in parts {
        for r in 0..m.rows() {
            out.row_mut(r).iter_mut().zip(m.row(r)).for_each(|(o, &x)| *o += x);
            count[r] += 1;
        }
    }
    for (r, &c) in count.iter().enumerate() {
        let d = T::from_usize(if strict { parts.len() } else { c }).unwrap();
        out.row_mut(r).iter_mut().for_each(|x| *x /= d);
    }
    out
}

fn heads_attention<T: Real>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>, n_heads: usize) -> Matrix<T> {
    let dh = q.cols() / n_heads;
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
    let mut out = Matrix::zeros(q.rows(), q.cols());
    for h in 0..n_heads {
        let (qh, kh, vh) = (q.slice_cols(h * dh, dh), k.slice_cols(h * dh, dh), v.slice_cols(h * dh, dh));
        let mut s = matmul(&qh, false, &kh, true);
        s.scale_assign(scale);
        softmax_rows(&mut s, &AttnMask::None);
        let ctx = matmul(&s, false, &vh, false);
        for r in 0..q.rows() {
            out.row_mut(r)[h * dh..(h + 1) * dh].copy_from_slice(ctx.row(r));
        }
    }
    out
}

impl<T: Real> Transformer<T> {
    fn apply_linear(&self, x: &Matrix<T>, (w, b): (ParamId, ParamId)) -> Matrix<T> {
        let mut y = matmul(x, false, self.params().get(w), false);
        let bias = self.params().get(b).row(0);
        for r in 0..y.rows() {
            y.row_mut(r).iter_mut().zip(bias).for_each(|(a, &b)| *a += b);
        }
        y
    }

    fn apply_norm(&self, x: &Matrix<T>, (g, b): (ParamId, ParamId)) -> Matrix<T> {
        layer_norm_rows(x, self.params().get(g).row(0), self.params().get(b).row(0)).0
    }

    /// Projects encoder states into per-layer cross-attention keys and values.
    pub fn cross_memory(&self, encoded: &[EncodedSource<T>]) -> Result<CrossMemory<T>> {
        if encoded.is_empty() {
            return Err(Error::shape("decoder needs at least one encoded source"));
        }
        let layers = self
            .decoder_weights()
            .iter()
            .map(|w| {
                let kv: Vec<(Matrix<T>, Matrix<T>)> = encoded
                    .iter()
                    .map(|e| (self.apply_linear(&e.states, w.cross[1]), self.apply_linear(&e.states, w.cross[2])))
                    .collect();
                match self.config().combination {
                    Combination::Parallel => kv,
                    c => {
                        let strict = c == Combination::MeanStrict;
                        let ks: Vec<&Matrix<T>> = kv.iter().map(|p| &p.0).collect();
                        let vs: Vec<&Matrix<T>> = kv.iter().map(|p| &p.1).collect();
                        vec![(row_mean(&ks, strict), row_mean(&vs, strict))]
                    }
                }
            })
            .collect();
        Ok(CrossMemory { layers })
    }

    pub fn empty_cache(&self) -> DecoderCache<T> {
        let d = self.config().d_model;
        let n = self.config().n_layers;
        DecoderCache {
            keys: vec![Matrix::zeros(0, d); n],
            values: vec![Matrix::zeros(0, d); n],
        }
    }

    /// Feeds one token and returns the next-token logits.
    pub fn decode_step(&self, memory: &CrossMemory<T>, cache: &mut DecoderCache<T>, token: u32) -> Result<Vec<T>> {
        let cfg = self.config();
        let pos = cache.len();
        if pos >= cfg.max_positions {
            return Err(Error::shape(format!("decoding past max_positions {}", cfg.max_positions)));
        }
        if token as usize >= cfg.vocab_size {
            return Err(Error::shape(format!("token {token} outside the vocabulary")));
        }
        let d = cfg.d_model;
        let h = cfg.n_heads;
        let scale = T::from_usize(d).unwrap().sqrt();
        let emb = self.params().get(self.embed_id()).row(token as usize);
        let pe = self.positions().row(pos);
        let mut x = Matrix::from_vec(1, d, emb.iter().zip(pe).map(|(&e, &p)| e * scale + p).collect());
        for (l, w) in self.decoder_weights().iter().enumerate() {
            let q = self.apply_linear(&x, w.self_attn[0]);
            cache.keys[l].push_row(self.apply_linear(&x, w.self_attn[1]).row(0));
            cache.values[l].push_row(self.apply_linear(&x, w.self_attn[2]).row(0));
            let a = heads_attention(&q, &cache.keys[l], &cache.values[l], h);
            let mut s = self.apply_linear(&a, w.self_attn[3]);
            s.add_assign(&x);
            x = self.apply_norm(&s, w.norm1);

            let q = self.apply_linear(&x, w.cross[0]);
            let sources = &memory.layers[l];
            let mut ctx = Matrix::zeros(1, d);
            for (k, v) in sources {
                ctx.add_assign(&heads_attention(&q, k, v, h));
            }
            ctx.scale_assign(T::one() / T::from_usize(sources.len()).unwrap());
            let mut s = self.apply_linear(&ctx, w.cross[3]);
            s.add_assign(&x);
            x = self.apply_norm(&s, w.norm2);

            let up = self.apply_linear(&x, w.ff[0]).map(|v| v.max(T::zero()));
            let mut s = self.apply_linear(&up, w.ff[1]);
            s.add_assign(&x);
            x = self.apply_norm(&s, w.norm3);
        }
        Ok(self.apply_linear(&x, self.output_weights()).into_data())
    }
}

#[cfg(test)]
mod tests {
    use super::super::transformer::ModelConfig;
    use super::*;

    fn tiny(combination: Combination) -> Transformer<f64> {
        let cfg = ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 16,
            dropout: 0.0,
            vocab_size: 11,
            max_positions: 16,
            combination,
            num_sources: 3,
        };
        Transformer::new(cfg, 5).unwrap()
    }

    #[test]
    fn incremental_matches_full_forward() {
        for comb in [Combination::Parallel, Combination::Mean, Combination::MeanStrict] {
            let m = tiny(comb);
            let enc = m.encode_sources(&[vec![1, 5, 6, 2], vec![7, 8], vec![9, 3, 10]]).unwrap();
            let prefix = [1u32, 4, 6, 7, 9];
            let full = m.decoder_forward(&enc, &prefix).unwrap();
            let mem = m.cross_memory(&enc).unwrap();
            let mut cache = m.empty_cache();
            for (i, &t) in prefix.iter().enumerate() {
                let step = m.decode_step(&mem, &mut cache, t).unwrap();
                let diff = step.iter().zip(full.row(i)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-9, "{comb:?} position {i}: {diff}");
            }
            assert_eq!(cache.len(), prefix.len());
        }
    }

    #[test]
    fn rejects_overflow() {
        let m = tiny(Combination::Parallel);
        let enc = m.encode_sources(&[vec![1, 2]]).unwrap();
        let mem = m.cross_memory(&enc).unwrap();
        let mut cache = m.empty_cache();
        assert!(m.decode_step(&mem, &mut cache, 11).is_err());
        for _ in 0..16 {
            m.decode_step(&mem, &mut cache, 1).unwrap();
        }
        assert!(m.decode_step(&mem, &mut cache, 1).is_err());
    }
}
