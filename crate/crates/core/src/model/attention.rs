//! Scaled dot-product attention and the two multi-source combinations.
//!
//! * parallel: every head attends to each source separately and the
//!   per-source contexts are averaged;
//! * mean: keys and values are averaged position-wise across sources and a
//!   single attention is run over the result.

use super::graph::{Graph, Var};
use super::matrix::{AttnMask, Matrix, Real};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// `softmax(q k^T / sqrt(d) + mask) v` for one head.
pub(crate) fn head_attention<T: Real>(g: &mut Graph<'_, T>, q: Var, k: Var, v: Var, mask: &AttnMask) -> Var {
    let d = g.shape(q).1;
    let scores = g.matmul(q, k, true);
    let scaled = g.scale(scores, T::one() / T::from_usize(d).unwrap().sqrt());
    let probs = g.softmax(scaled, mask);
    g.matmul(probs, v, false)
}

fn head_cols<T: Real>(g: &Graph<'_, T>, x: Var, n_heads: usize) -> usize {
    g.shape(x).1 / n_heads
}

/// Multi-head attention over already projected queries, keys and values;
/// returns the concatenated head contexts.
pub(crate) fn multi_head<T: Real>(g: &mut Graph<'_, T>, q: Var, k: Var, v: Var, n_heads: usize, mask: &AttnMask) -> Var {
    let dh = head_cols(g, q, n_heads);
    let heads: Vec<Var> = (0..n_heads)
        .map(|h| {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            head_attention(g, qh, kh, vh, mask)
        })
        .collect();
    if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)
    }
}

/// Per head: mean over sources of the single-source attention contexts.
pub(crate) fn multi_head_parallel<T: Real>(g: &mut Graph<'_, T>, q: Var, sources: &[(Var, Var)], n_heads: usize) -> Var {
    let dh = head_cols(g, q, n_heads);
    let heads: Vec<Var> = (0..n_heads)
        .map(|h| {
            let qh = g.slice_cols(q, h * dh, dh);
            let per_source: Vec<Var> = sources
                .iter()
                .map(|&(k, v)| {
                    let kh = g.slice_cols(k, h * dh, dh);
                    let vh = g.slice_cols(v, h * dh, dh);
                    head_attention(g, qh, kh, vh, &AttnMask::None)
                })
                .collect();
            if per_source.len() == 1 {
                per_source[0]
            } else {
                g.mean(&per_source)
            }
        })
        .collect();
    if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)
    }
}

/// Position-wise mean of keys and values, then one multi-head attention.
pub(crate) fn multi_head_mean<T: Real>(
    g: &mut Graph<'_, T>,
    q: Var,
    sources: &[(Var, Var)],
    n_heads: usize,
    strict: bool,
) -> Var {
    let (k, v) = if sources.len() == 1 {
        sources[0]
    } else {
        let ks: Vec<Var> = sources.iter().map(|s| s.0).collect();
        let vs: Vec<Var> = sources.iter().map(|s| s.1).collect();
        (g.row_mean(&ks, strict), g.row_mean(&vs, strict))
    };
    multi_head(g, q, k, v, n_heads, &AttnMask::None)
}

fn check_qkv<T: Real>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>) -> Result<()> {
    if q.cols() != k.cols() {
        return Err(Error::shape(format!("query width {} vs key width {}", q.cols(), k.cols())));
    }
    if k.rows() != v.rows() {
        return Err(Error::shape(format!("{} keys vs {} values", k.rows(), v.rows())));
    }
    if k.rows() == 0 {
        return Err(Error::shape("attention over zero keys"));
    }
    Ok(())
}

/// Single-head scaled dot-product attention on plain matrices.
pub fn attention_head<T: Real>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>, mask: &AttnMask) -> Result<Matrix<T>> {
    check_qkv(q, k, v)?;
    if let AttnMask::Keys(valid) = mask {
        if valid.len() != k.rows() {
            return Err(Error::shape("key mask length differs from key count"));
        }
    }
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let (qv, kv, vv) = (g.input(q.clone()), g.input(k.clone()), g.input(v.clone()));
    let out = head_attention(&mut g, qv, kv, vv, mask);
    Ok(g.value(out).clone())
}

fn check_sources<T: Real>(q: &Matrix<T>, sources: &[(Matrix<T>, Matrix<T>)]) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::shape("cross-attention needs at least one source"));
    }
    sources.iter().try_for_each(|(k, v)| check_qkv(q, k, v))
}

/// Single-head parallel combination: `(1/m) sum_i A(Q, K_i, V_i)`.
pub fn parallel_cross_attention<T: Real>(q: &Matrix<T>, sources: &[(Matrix<T>, Matrix<T>)]) -> Result<Matrix<T>> {
    check_sources(q, sources)?;
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let qv = g.input(q.clone());
    let kvs: Vec<(Var, Var)> = sources.iter().map(|(k, v)| (g.input(k.clone()), g.input(v.clone()))).collect();
    let out = multi_head_parallel(&mut g, qv, &kvs, 1);
    Ok(g.value(out).clone())
}

/// Single-head mean combination: `A(Q, mean_i K_i, mean_i V_i)`.
///
/// Sources may differ in length; each position is averaged over the sources
/// that reach it, or over all `m` sources when `strict`.
pub fn mean_cross_attention<T: Real>(q: &Matrix<T>, sources: &[(Matrix<T>, Matrix<T>)], strict: bool) -> Result<Matrix<T>> {
    check_sources(q, sources)?;
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let qv = g.input(q.clone());
    let kvs: Vec<(Var, Var)> = sources.iter().map(|(k, v)| (g.input(k.clone()), g.input(v.clone()))).collect();
    let out = multi_head_mean(&mut g, qv, &kvs, 1, strict);
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Loop-by-loop evaluation of one attention head.
    fn scalar_attention(q: &Matrix<f64>, k: &Matrix<f64>, v: &Matrix<f64>) -> Matrix<f64> {
        let d = q.cols() as f64;
        let mut out = Matrix::zeros(q.rows(), v.cols());
        for i in 0..q.rows() {
            let mut logits = Vec::new();
            for j in 0..k.rows() {
                let mut s = 0.0;
                for c in 0..q.cols() {
                    s += q.get(i, c) * k.get(j, c);
                }
                logits.push(s / d.sqrt());
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for c in 0..v.cols() {
                let mut acc = 0.0;
                for j in 0..k.rows() {
                    acc += exps[j] / z * v.get(j, c);
                }
                out.set(i, c, acc);
            }
        }
        out
    }

    #[test]
    fn matches_scalar_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (q, k, v) = (random(&mut rng, 2, 3), random(&mut rng, 2, 3), random(&mut rng, 2, 3));
        let got = attention_head(&q, &k, &v, &AttnMask::None).unwrap();
        assert!(got.max_abs_diff(&scalar_attention(&q, &k, &v)) < 1e-9);
    }

    #[test]
    fn single_key_and_uniform_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random(&mut rng, 3, 4);
        let k = random(&mut rng, 1, 4);
        let v = random(&mut rng, 1, 5);
        let got = attention_head(&q, &k, &v, &AttnMask::None).unwrap();
        for r in 0..3 {
            assert_eq!(got.row(r), v.row(0));
        }
        let k = Matrix::from_rows(&vec![vec![0.3, 0.1, 0.2, 0.4]; 3]);
        let v = random(&mut rng, 3, 2);
        let got = attention_head(&q, &k, &v, &AttnMask::None).unwrap();
        let mean: Vec<f64> = (0..2).map(|c| (0..3).map(|r| v.get(r, c)).sum::<f64>() / 3.0).collect();
        for r in 0..3 {
            assert!((got.get(r, 0) - mean[0]).abs() < 1e-12 && (got.get(r, 1) - mean[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_is_mean_of_single_source_attentions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random(&mut rng, 4, 6);
        let sources: Vec<_> = (0..3).map(|i| (random(&mut rng, 3 + i, 6), random(&mut rng, 3 + i, 6))).collect();
        let got = parallel_cross_attention(&q, &sources).unwrap();
        let mut want = Matrix::zeros(4, 6);
        for (k, v) in &sources {
            want.add_assign(&scalar_attention(&q, k, v));
        }
        want.scale_assign(1.0 / 3.0);
        assert!(got.max_abs_diff(&want) < 1e-9);
    }

    #[test]
    fn mean_with_identical_sources_and_m1() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random(&mut rng, 2, 4);
        let (k, v) = (random(&mut rng, 5, 4), random(&mut rng, 5, 4));
        let single = attention_head(&q, &k, &v, &AttnMask::None).unwrap();
        let same = vec![(k.clone(), v.clone()); 3];
        for strict in [false, true] {
            assert!(mean_cross_attention(&q, &same, strict).unwrap().max_abs_diff(&single) < 1e-9);
            assert!(mean_cross_attention(&q, &same[..1], strict).unwrap().max_abs_diff(&single) < 1e-9);
        }
        assert!(parallel_cross_attention(&q, &same).unwrap().max_abs_diff(&single) < 1e-9);
        assert!(parallel_cross_attention(&q, &same[..1]).unwrap().max_abs_diff(&single) < 1e-9);
    }

    #[test]
    fn opposite_keys_give_uniform_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random(&mut rng, 2, 3);
        let k = random(&mut rng, 4, 3);
        let v = random(&mut rng, 4, 3);
        let neg = k.map(|x| -x);
        let got = mean_cross_attention(&q, &[(k, v.clone()), (neg, v.clone())], true).unwrap();
        for c in 0..3 {
            let mean = (0..4).map(|r| v.get(r, c)).sum::<f64>() / 4.0;
            assert!((got.get(0, c) - mean).abs() < 1e-12);
            assert!((got.get(1, c) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_aware_mean_skips_padding() {
        let q = Matrix::<f64>::from_rows(&[vec![0.0, 0.0]]);
        let a: (Matrix<f64>, Matrix<f64>) = (Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]), Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]));
        let b: (Matrix<f64>, Matrix<f64>) = (Matrix::from_rows(&[vec![1.0, 0.0]]), Matrix::from_rows(&[vec![4.0, 0.0]]));
        // Zero query: uniform over averaged positions.
        let lenient = mean_cross_attention(&q, &[a.clone(), b.clone()], false).unwrap();
        assert!((lenient.get(0, 0) - 1.5).abs() < 1e-12 && (lenient.get(0, 1) - 1.0).abs() < 1e-12);
        let strict = mean_cross_attention(&q, &[a, b], true).unwrap();
        assert!((strict.get(0, 0) - 1.5).abs() < 1e-12 && (strict.get(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let q = Matrix::<f64>::zeros(1, 3);
        assert!(attention_head(&q, &Matrix::zeros(2, 4), &Matrix::zeros(2, 4), &AttnMask::None).is_err());
        assert!(attention_head(&q, &Matrix::zeros(0, 3), &Matrix::zeros(0, 3), &AttnMask::None).is_err());
        assert!(parallel_cross_attention(&q, &[]).is_err());
        assert!(mean_cross_attention(&q, &[], false).is_err());
    }
}
