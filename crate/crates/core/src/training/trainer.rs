//! The teacher-forced training loop, validation perplexity and checkpoint
//! selection.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::length_buckets;
use super::optim::{lr_at, nesterov_step, OptimizerState, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, Graph, Mode, ParamGrads, Real, SeqExample, Transformer};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: u64,
    /// Mean per-token loss of the batch.
    pub loss: f64,
    pub lr: f64,
    /// Target tokens processed per second.
    pub wps: f64,
    pub valid_ppl: Option<f64>,
}

impl LogRow {
    pub const HEADER: &'static str = "step\tloss\tlr\twps\tvalid_ppl";

    pub fn to_tsv(&self) -> String {
        let ppl = self.valid_ppl.map(|p| format!("{p:.6}")).unwrap_or_default();
        format!("{}\t{:.6}\t{:.8}\t{:.1}\t{}", self.step, self.loss, self.lr, self.wps, ppl)
    }
}

/// Where the loop writes its log and checkpoints.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub dir: PathBuf,
    pub vocab_hash: String,
}

impl TrainOutput {
    pub fn log_path(&self) -> PathBuf {
        self.dir.join("train_log.tsv")
    }

    pub fn best_path(&self) -> PathBuf {
        self.dir.join("best.ckpt")
    }

    pub fn step_path(&self, step: u64) -> PathBuf {
        self.dir.join(format!("step_{step:06}.ckpt"))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub steps: u64,
    /// Step whose parameters were kept as best (lowest validation
    /// perplexity, or the last step without validation data).
    pub best_step: u64,
    pub best_valid_ppl: Option<f64>,
    pub history: Vec<LogRow>,
}

fn nll_and_tokens<T: Real>(model: &Transformer<T>, ex: &SeqExample) -> (f64, usize) {
    let mut g = Graph::new(model.params());
    let l = model.example_loss(&mut g, ex, &mut Mode::Eval);
    (g.value(l).get(0, 0).to_f64().unwrap_or(f64::NAN), ex.loss_tokens())
}

/// `exp(total NLL / total scored tokens)` over `examples`.
pub fn perplexity<T: Real>(model: &Transformer<T>, examples: &[SeqExample]) -> Result<f64> {
    let (mut nll, mut count) = (0.0, 0usize);
    for ex in examples {
        model.check_example(ex)?;
        let (l, n) = nll_and_tokens(model, ex);
        nll += l;
        count += n;
    }
    if count == 0 {
        return Err(Error::data("perplexity over an empty set"));
    }
    let ppl = (nll / count as f64).exp();
    if !ppl.is_finite() {
        return Err(Error::numerical("non-finite perplexity"));
    }
    Ok(ppl)
}

/// Runs `cfg.total_steps` updates on `model`.
///
/// The parameters left in `model` are those of the best step. With an
/// `output`, the log is written as TSV, a checkpoint is saved at every
/// evaluation and the best one is copied to `best.ckpt`.
pub fn train_model<T: Real>(
    model: &mut Transformer<T>,
    train: &[SeqExample],
    valid: &[SeqExample],
    cfg: &TrainConfig,
    output: Option<&TrainOutput>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::data("no training examples"));
    }
    for ex in train.iter().chain(valid) {
        model.check_example(ex)?;
    }
    let mut log = match output {
        Some(out) => {
            fs::create_dir_all(&out.dir).map_err(|e| Error::io(&out.dir, e))?;
            let path = out.log_path();
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{}", LogRow::HEADER).map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };

    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
    let mut state = OptimizerState::new(model.params());
    let mut grads = ParamGrads::zeros_like(model.params());
    let mut history = Vec::new();
    let mut best: Option<(f64, u64, Vec<crate::model::Matrix<T>>)> = None;
    let mut batches = Vec::new().into_iter();

    while state.step < cfg.total_steps {
        let batch = match batches.next() {
            Some(b) => b,
            None => {
                batches = length_buckets(train, cfg.batch_size, &mut batch_rng).into_iter();
                continue;
            }
        };
        let started = Instant::now();
        let tokens: usize = batch.iter().map(|&i| train[i].loss_tokens()).sum();
        if tokens == 0 {
            continue;
        }
        grads.zero();
        let seed = T::one() / T::from_usize(tokens).unwrap();
        let mut loss = 0.0;
        for &i in &batch {
            let mut g = Graph::new(model.params());
            let l = model.example_loss(&mut g, &train[i], &mut Mode::Train(&mut dropout_rng));
            loss += g.value(l).get(0, 0).to_f64().unwrap_or(f64::NAN);
            g.backward(l, seed, &mut grads);
        }
        let loss = loss / tokens as f64;
        if !loss.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite loss at step {} (batch of {} examples, {tokens} tokens)",
                state.step + 1,
                batch.len()
            )));
        }
        let norm = grads.global_norm();
        if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
            grads.scale(T::lit(cfg.clip_norm / norm));
        }
        let step = state.step + 1;
        let lr = lr_at(step, cfg);
        nesterov_step(model.params_mut(), &grads, &mut state, lr, cfg.momentum)?;

        let elapsed = started.elapsed().as_secs_f64().max(1e-9);
        let evaluate = step == cfg.total_steps || (cfg.eval_interval > 0 && step % cfg.eval_interval == 0);
        let valid_ppl = if evaluate && !valid.is_empty() {
            Some(perplexity(model, valid)?)
        } else {
            None
        };
        if evaluate {
            let score = valid_ppl.unwrap_or(f64::NEG_INFINITY);
            if best.as_ref().map_or(true, |(b, _, _)| score < *b || valid_ppl.is_none()) {
                best = Some((score, step, model.params().values().to_vec()));
            }
            if let Some(out) = output {
                save_checkpoint(&out.step_path(step), model, &out.vocab_hash, step)?;
            }
        }
        let row = LogRow {
            step,
            loss,
            lr,
            wps: tokens as f64 / elapsed,
            valid_ppl,
        };
        if let Some((f, path)) = log.as_mut() {
            writeln!(f, "{}", row.to_tsv()).map_err(|e| Error::io(&*path, e))?;
        }
        history.push(row);
    }

    let (score, best_step, values) = best.expect("the final step always evaluates");
    model.params_mut().values_mut().clone_from_slice(&values);
    if let Some(out) = output {
        save_checkpoint(&out.best_path(), model, &out.vocab_hash, best_step)?;
    }
    Ok(TrainOutcome {
        steps: state.step,
        best_step,
        best_valid_ppl: score.is_finite().then_some(score),
        history,
    })
}

/// Reads back the rows of a training log.
pub fn read_train_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: &str| Error::data(format!("{}: bad log line {line:?}", path.display()));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            Ok(LogRow {
                step: f[0].parse().map_err(|_| bad(line))?,
                loss: num(f[1])?,
                lr: num(f[2])?,
                wps: num(f[3])?,
                valid_ppl: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Combination, ModelConfig};
    use rand::Rng;

    fn fixture(n: usize, vocab: u32, seed: u64) -> Vec<SeqExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let src: Vec<Vec<u32>> = (0..2).map(|_| (0..6).map(|_| rng.gen_range(5..vocab)).collect()).collect();
                let mut tgt: Vec<u32> = (0..8).map(|_| rng.gen_range(5..vocab)).collect();
                tgt.push(2);
                let mut input = vec![1];
                input.extend_from_slice(&tgt[..tgt.len() - 1]);
                SeqExample {
                    sources: src,
                    loss_mask: vec![true; tgt.len()],
                    input,
                    target: tgt,
                }
            })
            .collect()
    }

    fn small(vocab: usize) -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            d_ff: 32,
            dropout: 0.0,
            vocab_size: vocab,
            max_positions: 16,
            combination: Combination::Parallel,
            num_sources: 2,
        }
    }

    #[test]
    fn loss_decreases_and_runs_are_reproducible() {
        let exs = fixture(6, 20, 3);
        let cfg = TrainConfig {
            total_steps: 60,
            warmup_steps: 10,
            batch_size: 3,
            eval_interval: 20,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = Transformer::<f32>::new(small(20), 1).unwrap();
            let out = train_model(&mut m, &exs, &exs[..2], &cfg, None).unwrap();
            (m, out)
        };
        let (a, out) = run();
        let (b, _) = run();
        for (x, y) in a.params().values().iter().zip(b.params().values()) {
            assert_eq!(x.data(), y.data());
        }
        let first: f64 = out.history[..5].iter().map(|r| r.loss).sum();
        let last: f64 = out.history[55..].iter().map(|r| r.loss).sum();
        assert!(last < first, "{first} -> {last}");
        assert_eq!(out.history.len(), 60);
        assert!(out.history.iter().filter(|r| r.valid_ppl.is_some()).count() == 3);
    }

    #[test]
    fn perplexity_is_exp_mean_nll() {
        let exs = fixture(3, 12, 4);
        let m = Transformer::<f64>::new(small(12), 2).unwrap();
        let ppl = perplexity(&m, &exs).unwrap();
        let mut total = 0.0;
        let mut n = 0;
        for ex in &exs {
            let enc = m.encode_sources(&ex.sources).unwrap();
            let logits = m.decoder_forward(&enc, &ex.input).unwrap();
            let (mean, count) = crate::training::cross_entropy_loss(&logits, &ex.target, 0).unwrap();
            total += mean * count as f64;
            n += count;
        }
        assert!((ppl - (total / n as f64).exp()).abs() < 1e-9);
        assert!(perplexity(&m, &[]).is_err());
    }

    #[test]
    fn zero_model_has_vocabulary_perplexity() {
        let exs = fixture(2, 12, 5);
        let mut m = Transformer::<f64>::new(small(12), 2).unwrap();
        let n = m.params().len();
        // Zero output projection: uniform next-token distribution.
        for v in &mut m.params_mut().values_mut()[n - 2..] {
            v.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        assert!((perplexity(&m, &exs).unwrap() - 12.0).abs() < 1e-9);
    }
}
