//! Multi-source encoder-decoder Transformer (post-norm, sinusoidal
//! positions, shared token embeddings).
//!
//! Each source is encoded independently with shared weights; there is no
//! source-identity embedding, so decoder outputs do not depend on the order
//! of the sources.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{multi_head, multi_head_mean, multi_head_parallel};
use super::graph::{Graph, Var};
use super::matrix::{sinusoidal_positions, AttnMask, Matrix, Real};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// How decoder cross-attention combines several encoded sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combination {
    Parallel,
    /// Position-wise mean; padded positions are excluded from the divisor.
    Mean,
    /// Position-wise mean that always divides by the number of sources.
    MeanStrict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
    /// Filled from the vocabulary when zero.
    pub vocab_size: usize,
    pub max_positions: usize,
    pub combination: Combination,
    /// Number of input reviews per example.
    pub num_sources: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            dropout: 0.1,
            vocab_size: 0,
            max_positions: 256,
            combination: Combination::Parallel,
            num_sources: 8,
        }
    }
}

impl ModelConfig {
    /// Transformer-big sizes.
    pub fn big(vocab_size: usize) -> Self {
        ModelConfig {
            d_model: 1024,
            n_heads: 16,
            n_layers: 6,
            d_ff: 4096,
            dropout: 0.1,
            vocab_size,
            max_positions: 1024,
            combination: Combination::Parallel,
            num_sources: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0,1)"));
        }
        if self.vocab_size == 0 || self.max_positions == 0 || self.d_ff == 0 || self.n_layers == 0 {
            return Err(Error::config("model sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct AttnBlock {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct FeedForward {
    up: Linear,
    down: Linear,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    attn: AttnBlock,
    norm1: Norm,
    ff: FeedForward,
    norm2: Norm,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    self_attn: AttnBlock,
    norm1: Norm,
    cross: AttnBlock,
    norm2: Norm,
    ff: FeedForward,
    norm3: Norm,
}

#[derive(Debug, Clone)]
struct Layout {
    embed: ParamId,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    out: Linear,
}

/// Declares every parameter in a fixed order through `init(name, rows, cols, fan_in)`;
/// `fan_in` is `None` for biases.
struct Builder<'a, T: Real> {
    store: &'a mut ParamStore<T>,
    init: &'a mut dyn FnMut(&str, usize, usize, Option<usize>) -> Matrix<T>,
    d: usize,
}

impl<T: Real> Builder<'_, T> {
    fn param(&mut self, name: String, rows: usize, cols: usize, fan_in: Option<usize>) -> ParamId {
        let m = (self.init)(&name, rows, cols, fan_in);
        self.store.add(name, m)
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            w: self.param(format!("{name}.weight"), fan_in, fan_out, Some(fan_in)),
            b: self.param(format!("{name}.bias"), 1, fan_out, None),
        }
    }

    fn attn(&mut self, name: &str) -> AttnBlock {
        let d = self.d;
        AttnBlock {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
        }
    }

    fn norm(&mut self, name: &str) -> Norm {
        let gain = self.store.add(format!("{name}.gain"), Matrix::filled(1, self.d, T::one()));
        let bias = self.store.add(format!("{name}.bias"), Matrix::zeros(1, self.d));
        Norm { gain, bias }
    }

    fn ff(&mut self, name: &str, d_ff: usize) -> FeedForward {
        FeedForward {
            up: self.linear(&format!("{name}.up"), self.d, d_ff),
            down: self.linear(&format!("{name}.down"), d_ff, self.d),
        }
    }
}

fn declare<T: Real>(
    cfg: &ModelConfig,
    store: &mut ParamStore<T>,
    init: &mut dyn FnMut(&str, usize, usize, Option<usize>) -> Matrix<T>,
) -> Layout {
    let d = cfg.d_model;
    let mut b = Builder { store, init, d };
    let embed = b.param("embed.weight".into(), cfg.vocab_size, d, Some(d));
    let encoder = (0..cfg.n_layers)
        .map(|l| EncoderLayer {
            attn: b.attn(&format!("encoder.{l}.self_attn")),
            norm1: b.norm(&format!("encoder.{l}.norm1")),
            ff: b.ff(&format!("encoder.{l}.ff"), cfg.d_ff),
            norm2: b.norm(&format!("encoder.{l}.norm2")),
        })
        .collect();
    let decoder = (0..cfg.n_layers)
        .map(|l| DecoderLayer {
            self_attn: b.attn(&format!("decoder.{l}.self_attn")),
            norm1: b.norm(&format!("decoder.{l}.norm1")),
            cross: b.attn(&format!("decoder.{l}.cross_attn")),
            norm2: b.norm(&format!("decoder.{l}.norm2")),
            ff: b.ff(&format!("decoder.{l}.ff"), cfg.d_ff),
            norm3: b.norm(&format!("decoder.{l}.norm3")),
        })
        .collect();
    let out = b.linear("out", d, cfg.vocab_size);
    Layout {
        embed,
        encoder,
        decoder,
        out,
    }
}

/// Dropout on or off for one forward pass.
pub enum Mode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

/// One encoder output: `source_len x d_model` states plus a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSource<T> {
    pub states: Matrix<T>,
    pub mask: Vec<bool>,
}

/// A teacher-forced training example.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqExample {
    pub sources: Vec<Vec<u32>>,
    /// Decoder input (starts with BOS).
    pub input: Vec<u32>,
    /// Next-token targets, aligned with `input`.
    pub target: Vec<u32>,
    /// Whether each target position contributes to the loss.
    pub loss_mask: Vec<bool>,
}

impl SeqExample {
    pub fn loss_tokens(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone)]
pub struct Transformer<T: Real> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
    positions: Matrix<T>,
}

impl<T: Real> Transformer<T> {
    /// Random initialization: weights uniform in `±1/sqrt(fan_in)`
    /// (embeddings use `d_model` as fan-in), biases zero, norms identity.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layout = declare(&config, &mut store, &mut |_, rows, cols, fan_in| match fan_in {
            None => Matrix::zeros(rows, cols),
            Some(f) => {
                let a = 1.0 / (f as f64).sqrt();
                Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| T::lit(rng.gen_range(-a..a))).collect())
            }
        });
        Ok(Self::assemble(config, store, layout))
    }

    fn assemble(config: ModelConfig, params: ParamStore<T>, layout: Layout) -> Self {
        let positions = sinusoidal_positions(config.max_positions, config.d_model);
        Transformer {
            config,
            params,
            layout,
            positions,
        }
    }

    /// Rebuilds a model from parameters stored in declaration order.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let mut probe = ParamStore::<T>::new();
        let layout = declare(&config, &mut probe, &mut |_, rows, cols, _| Matrix::zeros(rows, cols));
        if params.len() != probe.len() {
            return Err(Error::data(format!(
                "expected {} parameter tensors, found {}",
                probe.len(),
                params.len()
            )));
        }
        for (i, want) in probe.values().iter().enumerate() {
            let (name, got) = (&params.names()[i], &params.values()[i]);
            if name != &probe.names()[i] || got.shape() != want.shape() {
                return Err(Error::data(format!(
                    "parameter {i}: found {name} {:?}, expected {} {:?}",
                    got.shape(),
                    probe.names()[i],
                    want.shape()
                )));
            }
        }
        Ok(Self::assemble(config, params, layout))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> Transformer<U> {
        Transformer {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
            positions: sinusoidal_positions(self.config.max_positions, self.config.d_model),
        }
    }

    fn check_ids(&self, ids: &[u32], what: &str) -> Result<()> {
        if ids.len() > self.config.max_positions {
            return Err(Error::shape(format!(
                "{what} of length {} exceeds max_positions {}",
                ids.len(),
                self.config.max_positions
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::shape(format!("{what} contains token {bad} outside the vocabulary")));
        }
        Ok(())
    }

    pub fn check_example(&self, ex: &SeqExample) -> Result<()> {
        if ex.sources.is_empty() {
            return Err(Error::shape("example without sources"));
        }
        for s in &ex.sources {
            if s.is_empty() {
                return Err(Error::shape("empty source sequence"));
            }
            self.check_ids(s, "source")?;
        }
        self.check_ids(&ex.input, "decoder input")?;
        self.check_ids(&ex.target, "target")?;
        if ex.input.len() != ex.target.len() || ex.target.len() != ex.loss_mask.len() {
            return Err(Error::shape("decoder input, target and loss mask lengths differ"));
        }
        Ok(())
    }

    fn dropout(&self, g: &mut Graph<'_, T>, x: Var, mode: &mut Mode<'_>) -> Var {
        let p = self.config.dropout;
        match mode {
            Mode::Train(rng) if p > 0.0 => {
                let keep = T::lit(1.0 / (1.0 - p));
                let n = g.value(x).data().len();
                let mask = (0..n).map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep }).collect();
                g.dropout(x, mask)
            }
            _ => x,
        }
    }

    fn linear(&self, g: &mut Graph<'_, T>, x: Var, l: &Linear) -> Var {
        let w = g.param(l.w);
        let b = g.param(l.b);
        let y = g.matmul(x, w, false);
        g.add_row(y, b)
    }

    fn norm(&self, g: &mut Graph<'_, T>, x: Var, n: &Norm) -> Var {
        let gain = g.param(n.gain);
        let bias = g.param(n.bias);
        g.layer_norm(x, gain, bias)
    }

    fn embed(&self, g: &mut Graph<'_, T>, ids: &[u32], mode: &mut Mode<'_>) -> Var {
        let table = g.param(self.layout.embed);
        let rows = g.gather(table, ids);
        let scaled = g.scale(rows, T::from_usize(self.config.d_model).unwrap().sqrt());
        let pe = g.input(self.positions.slice_rows(0, ids.len()));
        let x = g.add(scaled, pe);
        self.dropout(g, x, mode)
    }

    fn feed_forward(&self, g: &mut Graph<'_, T>, x: Var, ff: &FeedForward) -> Var {
        let h = self.linear(g, x, &ff.up);
        let h = g.relu(h);
        self.linear(g, h, &ff.down)
    }

    /// Residual connection, dropout on the sublayer output, then layer norm.
    fn residual(&self, g: &mut Graph<'_, T>, x: Var, sub: Var, n: &Norm, mode: &mut Mode<'_>) -> Var {
        let sub = self.dropout(g, sub, mode);
        let s = g.add(x, sub);
        self.norm(g, s, n)
    }

    fn self_attention(&self, g: &mut Graph<'_, T>, x: Var, a: &AttnBlock, mask: &AttnMask) -> Var {
        let q = self.linear(g, x, &a.q);
        let k = self.linear(g, x, &a.k);
        let v = self.linear(g, x, &a.v);
        let ctx = multi_head(g, q, k, v, self.config.n_heads, mask);
        self.linear(g, ctx, &a.o)
    }

    fn cross_attention(&self, g: &mut Graph<'_, T>, x: Var, sources: &[Var], a: &AttnBlock) -> Var {
        let q = self.linear(g, x, &a.q);
        let kvs: Vec<(Var, Var)> = sources
            .iter()
            .map(|&s| (self.linear(g, s, &a.k), self.linear(g, s, &a.v)))
            .collect();
        let h = self.config.n_heads;
        let ctx = match self.config.combination {
            Combination::Parallel => multi_head_parallel(g, q, &kvs, h),
            Combination::Mean => multi_head_mean(g, q, &kvs, h, false),
            Combination::MeanStrict => multi_head_mean(g, q, &kvs, h, true),
        };
        self.linear(g, ctx, &a.o)
    }

    /// Encoder states of one source.
    pub fn encode_graph(&self, g: &mut Graph<'_, T>, ids: &[u32], mode: &mut Mode<'_>) -> Var {
        let mut x = self.embed(g, ids, mode);
        for layer in &self.layout.encoder {
            let a = self.self_attention(g, x, &layer.attn, &AttnMask::None);
            x = self.residual(g, x, a, &layer.norm1, mode);
            let f = self.feed_forward(g, x, &layer.ff);
            x = self.residual(g, x, f, &layer.norm2, mode);
        }
        x
    }

    /// Vocabulary logits for every decoder input position.
    pub fn decode_graph(&self, g: &mut Graph<'_, T>, sources: &[Var], input: &[u32], mode: &mut Mode<'_>) -> Var {
        let mut x = self.embed(g, input, mode);
        for layer in &self.layout.decoder {
            let a = self.self_attention(g, x, &layer.self_attn, &AttnMask::Causal { offset: 0 });
            x = self.residual(g, x, a, &layer.norm1, mode);
            let c = self.cross_attention(g, x, sources, &layer.cross);
            x = self.residual(g, x, c, &layer.norm2, mode);
            let f = self.feed_forward(g, x, &layer.ff);
            x = self.residual(g, x, f, &layer.norm3, mode);
        }
        self.linear(g, x, &self.layout.out)
    }

    /// Summed negative log-likelihood of the masked target positions.
    pub fn example_loss(&self, g: &mut Graph<'_, T>, ex: &SeqExample, mode: &mut Mode<'_>) -> Var {
        if ex.input.is_empty() {
            return g.input(Matrix::zeros(1, 1));
        }
        let sources: Vec<Var> = ex.sources.iter().map(|s| self.encode_graph(g, s, mode)).collect();
        let logits = self.decode_graph(g, &sources, &ex.input, mode);
        let weights: Vec<T> = ex.loss_mask.iter().map(|&m| if m { T::one() } else { T::zero() }).collect();
        g.cross_entropy(logits, &ex.target, &weights)
    }

    /// Independent encoder pass for every source (dropout off).
    pub fn encode_sources(&self, sources: &[Vec<u32>]) -> Result<Vec<EncodedSource<T>>> {
        sources
            .iter()
            .map(|s| {
                if s.is_empty() {
                    return Err(Error::shape("empty source sequence"));
                }
                self.check_ids(s, "source")?;
                let mut g = Graph::new(&self.params);
                let out = self.encode_graph(&mut g, s, &mut Mode::Eval);
                Ok(EncodedSource {
                    states: g.value(out).clone(),
                    mask: vec![true; s.len()],
                })
            })
            .collect()
    }

    /// Teacher-forced logits (`prefix_len x vocab`) given encoded sources.
    pub fn decoder_forward(&self, encoded: &[EncodedSource<T>], prefix: &[u32]) -> Result<Matrix<T>> {
        if encoded.is_empty() {
            return Err(Error::shape("decoder needs at least one encoded source"));
        }
        if let Some(bad) = encoded.iter().find(|e| e.states.cols() != self.config.d_model) {
            return Err(Error::shape(format!("encoded width {} != d_model", bad.states.cols())));
        }
        self.check_ids(prefix, "decoder prefix")?;
        let mut g = Graph::new(&self.params);
        let srcs: Vec<Var> = encoded.iter().map(|e| g.input(e.states.clone())).collect();
        let out = self.decode_graph(&mut g, &srcs, prefix, &mut Mode::Eval);
        Ok(g.value(out).clone())
    }

    pub(crate) fn positions(&self) -> &Matrix<T> {
        &self.positions
    }

    pub(crate) fn embed_id(&self) -> ParamId {
        self.layout.embed
    }
}

/// Parameter handles needed by the incremental decoder.
pub(crate) struct DecoderWeights {
    pub self_attn: [(ParamId, ParamId); 4],
    pub norm1: (ParamId, ParamId),
    pub cross: [(ParamId, ParamId); 4],
    pub norm2: (ParamId, ParamId),
    pub ff: [(ParamId, ParamId); 2],
    pub norm3: (ParamId, ParamId),
}

impl<T: Real> Transformer<T> {
    pub(crate) fn decoder_weights(&self) -> Vec<DecoderWeights> {
        let lin = |l: &Linear| (l.w, l.b);
        let blk = |a: &AttnBlock| [lin(&a.q), lin(&a.k), lin(&a.v), lin(&a.o)];
        let nrm = |n: &Norm| (n.gain, n.bias);
        self.layout
            .decoder
            .iter()
            .map(|l| DecoderWeights {
                self_attn: blk(&l.self_attn),
                norm1: nrm(&l.norm1),
                cross: blk(&l.cross),
                norm2: nrm(&l.norm2),
                ff: [lin(&l.ff.up), lin(&l.ff.down)],
                norm3: nrm(&l.norm3),
            })
            .collect()
    }

    pub(crate) fn output_weights(&self) -> (ParamId, ParamId) {
        (self.layout.out.w, self.layout.out.b)
    }
}
