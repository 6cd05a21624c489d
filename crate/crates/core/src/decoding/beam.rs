//! Length-normalized beam search with repeated-trigram blocking.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_softmax, CrossMemory, DecoderCache, Real, Transformer};
use crate::tokenizer::EOS;

/// `((5 + length) / 6)^alpha`.
pub fn length_penalty(length: usize, alpha: f64) -> f64 {
    ((5.0 + length as f64) / 6.0).powf(alpha)
}

/// Next-token log-probabilities given a decoding state.
pub trait Scorer {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    /// State after consuming `prefix`, and the log-probabilities that follow it.
    fn start(&self, prefix: &[u32]) -> Result<(Self::State, Vec<f64>)>;

    /// Consumes `token` and returns the log-probabilities that follow it.
    fn advance(&self, state: &mut Self::State, token: u32) -> Result<Vec<f64>>;
}

/// A model with precomputed cross-attention memory.
pub struct ModelScorer<'m, T: Real> {
    pub model: &'m Transformer<T>,
    pub memory: CrossMemory<T>,
}

impl<T: Real> Scorer for ModelScorer<'_, T> {
    type State = DecoderCache<T>;

    fn vocab_size(&self) -> usize {
        self.model.config().vocab_size
    }

    fn start(&self, prefix: &[u32]) -> Result<(Self::State, Vec<f64>)> {
        if prefix.is_empty() {
            return Err(Error::shape("decoding needs a non-empty prefix"));
        }
        let mut cache = self.model.empty_cache();
        let mut logits = Vec::new();
        for &t in prefix {
            logits = self.model.decode_step(&self.memory, &mut cache, t)?;
        }
        Ok((cache, log_softmax(&logits)))
    }

    fn advance(&self, state: &mut Self::State, token: u32) -> Result<Vec<f64>> {
        Ok(log_softmax(&self.model.decode_step(&self.memory, state, token)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub beam_size: usize,
    /// Maximum number of generated subword tokens.
    pub budget: usize,
    /// Exponent of the length penalty.
    pub length_penalty: f64,
    pub block_trigrams: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_size: 4,
            budget: 60,
            length_penalty: 1.2,
            block_trigrams: true,
        }
    }
}

impl DecodeConfig {
    pub fn yelp() -> Self {
        DecodeConfig {
            beam_size: 35,
            budget: 150,
            length_penalty: 1.2,
            block_trigrams: true,
        }
    }

    pub fn rotten_tomatoes() -> Self {
        DecodeConfig {
            budget: 50,
            ..Self::yelp()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 || self.budget == 0 {
            return Err(Error::config("beam_size and budget must be at least 1"));
        }
        Ok(())
    }
}

/// A finished hypothesis. `tokens` excludes the prefix and the final EOS.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub logprob: f64,
    pub score: f64,
    /// False when the hypothesis stopped at the budget.
    pub ended_with_eos: bool,
}

/// Beam state after one expansion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    /// (parent beam, token, normalized score) of the kept live hypotheses.
    pub kept: Vec<(usize, u32, f64)>,
    /// Normalized scores of the hypotheses that finished with EOS at this step.
    pub finished: Vec<f64>,
    /// Best normalized score among candidates that were dropped.
    pub best_pruned: Option<f64>,
}

#[derive(Clone)]
struct Live<S> {
    state: S,
    tokens: Vec<u32>,
    logprob: f64,
    next: Vec<f64>,
    trigrams: HashSet<[u32; 3]>,
}

fn blocked(tokens: &[u32], trigrams: &HashSet<[u32; 3]>, next: u32) -> bool {
    match tokens {
        [.., a, b] => trigrams.contains(&[*a, *b, next]),
        _ => false,
    }
}

fn with_token(tokens: &[u32], trigrams: &HashSet<[u32; 3]>, next: u32) -> (Vec<u32>, HashSet<[u32; 3]>) {
    let mut t = trigrams.clone();
    if let [.., a, b] = tokens {
        t.insert([*a, *b, next]);
    }
    let mut v = tokens.to_vec();
    v.push(next);
    (v, t)
}

/// Beam search from `prefix` (BOS plus the control prompt).
///
/// Tokens in `banned` are never generated; EOS is never masked. With
/// trigram blocking, a continuation that would repeat a trigram of the
/// generated region gets probability zero. Candidates are ranked by
/// normalized score, ties by parent beam then token id; search stops once
/// `beam_size` hypotheses have ended or after `budget` tokens.
pub fn beam_search<S: Scorer>(
    scorer: &S,
    prefix: &[u32],
    cfg: &DecodeConfig,
    banned: &[u32],
    mut trace: Option<&mut Vec<TraceStep>>,
) -> Result<Hypothesis> {
    cfg.validate()?;
    let v = scorer.vocab_size();
    let mut allowed = vec![true; v];
    for &b in banned {
        if b != EOS && (b as usize) < v {
            allowed[b as usize] = false;
        }
    }
    let (state, next) = scorer.start(prefix)?;
    let mut live = vec![Live {
        state,
        tokens: Vec::new(),
        logprob: 0.0,
        next,
        trigrams: HashSet::new(),
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 0..cfg.budget {
        let len = step + 1;
        let lp = length_penalty(len, cfg.length_penalty);
        let mut cands: Vec<(f64, usize, u32, f64)> = Vec::new();
        for (bi, b) in live.iter().enumerate() {
            for (tok, &l) in b.next.iter().enumerate() {
                let tok = tok as u32;
                if !allowed[tok as usize] || l == f64::NEG_INFINITY {
                    continue;
                }
                if cfg.block_trigrams && tok != EOS && blocked(&b.tokens, &b.trigrams, tok) {
                    continue;
                }
                let total = b.logprob + l;
                cands.push((total / lp, bi, tok, total));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut next_live: Vec<Live<S::State>> = Vec::with_capacity(cfg.beam_size);
        let mut step_trace = TraceStep {
            step,
            kept: Vec::new(),
            finished: Vec::new(),
            best_pruned: None,
        };
        let last_step = len == cfg.budget;
        let mut consumed = 0;
        for &(score, bi, tok, total) in &cands {
            if next_live.len() == cfg.beam_size {
                break;
            }
            consumed += 1;
            let parent = &live[bi];
            if tok == EOS {
                finished.push(Hypothesis {
                    tokens: parent.tokens.clone(),
                    logprob: total,
                    score,
                    ended_with_eos: true,
                });
                step_trace.finished.push(score);
                continue;
            }
            let (tokens, trigrams) = with_token(&parent.tokens, &parent.trigrams, tok);
            step_trace.kept.push((bi, tok, score));
            if last_step {
                finished.push(Hypothesis {
                    tokens,
                    logprob: total,
                    score,
                    ended_with_eos: false,
                });
                next_live.push(Live {
                    state: parent.state.clone(),
                    tokens: Vec::new(),
                    logprob: total,
                    next: Vec::new(),
                    trigrams: HashSet::new(),
                });
                continue;
            }
            let mut state = parent.state.clone();
            let next = scorer.advance(&mut state, tok)?;
            next_live.push(Live {
                state,
                tokens,
                logprob: total,
                next,
                trigrams,
            });
        }
        step_trace.best_pruned = cands.get(consumed).map(|c| c.0);
        if let Some(t) = trace.as_deref_mut() {
            t.push(step_trace);
        }
        if last_step {
            break;
        }
        live = next_live;
        if live.is_empty() || finished.len() >= cfg.beam_size {
            break;
        }
    }
    finished
        .into_iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.score.total_cmp(&b.score).then(ib.cmp(ia)))
        .map(|(_, h)| h)
        .ok_or_else(|| Error::numerical("beam search produced no hypothesis"))
}

/// Repeatedly takes the most probable allowed token (ties: smaller id).
pub fn greedy_decode<S: Scorer>(
    scorer: &S,
    prefix: &[u32],
    budget: usize,
    banned: &[u32],
    block_trigrams: bool,
) -> Result<Hypothesis> {
    let (mut state, mut next) = scorer.start(prefix)?;
    let mut tokens = Vec::new();
    let mut trigrams = HashSet::new();
    let mut logprob = 0.0;
    for _ in 0..budget {
        let best = next
            .iter()
            .enumerate()
            .map(|(t, &l)| (t as u32, l))
            .filter(|&(t, l)| {
                l > f64::NEG_INFINITY
                    && (t == EOS || !banned.contains(&t))
                    && !(block_trigrams && t != EOS && blocked(&tokens, &trigrams, t))
            })
            .fold(None, |acc: Option<(u32, f64)>, c| match acc {
                Some(a) if a.1 >= c.1 => Some(a),
                _ => Some(c),
            });
        let Some((tok, l)) = best else { break };
        logprob += l;
        if tok == EOS {
            return Ok(Hypothesis {
                score: logprob,
                tokens,
                logprob,
                ended_with_eos: true,
            });
        }
        let (t, tg) = with_token(&tokens, &trigrams, tok);
        tokens = t;
        trigrams = tg;
        next = scorer.advance(&mut state, tok)?;
    }
    if tokens.is_empty() {
        return Err(Error::numerical("greedy decoding produced no token"));
    }
    Ok(Hypothesis {
        score: logprob,
        tokens,
        logprob,
        ended_with_eos: false,
    })
}

/// Whether any token trigram occurs twice in `tokens`.
pub fn has_repeated_trigram(tokens: &[u32]) -> bool {
    let mut seen = HashSet::new();
    tokens.windows(3).any(|w| !seen.insert([w[0], w[1], w[2]]))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Log-probabilities looked up from the last generated token.
    struct Table {
        rows: Vec<Vec<f64>>,
    }

    impl Table {
        fn from_probs(rows: Vec<Vec<f64>>) -> Self {
            Table {
                rows: rows.into_iter().map(|r| r.into_iter().map(f64::ln).collect()).collect(),
            }
        }
    }

    impl Scorer for Table {
        type State = u32;
        fn vocab_size(&self) -> usize {
            self.rows[0].len()
        }
        fn start(&self, prefix: &[u32]) -> Result<(u32, Vec<f64>)> {
            let last = *prefix.last().unwrap();
            Ok((last, self.rows[last as usize].clone()))
        }
        fn advance(&self, state: &mut u32, token: u32) -> Result<Vec<f64>> {
            *state = token;
            Ok(self.rows[token as usize].clone())
        }
    }

    // Tokens: 0 pad, 1 bos, 2 eos, 3 unk, 4 sep, 5 "a", 6 "b", 7 "c", 8 "d".
    fn cycle_model() -> Table {
        let row = |next: usize| {
            let mut r = vec![0.01; 9];
            r[next] = 0.6;
            r[8] = 0.3;
            r[2] = 0.01;
            let s: f64 = r.iter().sum();
            r.iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        Table::from_probs(vec![row(5), row(5), row(2), row(5), row(5), row(6), row(7), row(5), row(5)])
    }

    const BANNED: [u32; 4] = [0, 1, 3, 4];

    #[test]
    fn penalty_values() {
        assert_eq!(length_penalty(1, 0.7), 1.0);
        assert_eq!(length_penalty(40, 0.0), 1.0);
        assert!((length_penalty(13, 1.2) - 3f64.powf(1.2)).abs() < 1e-9);
    }

    #[test]
    fn blocking_breaks_the_cycle() {
        let m = cycle_model();
        let free = greedy_decode(&m, &[1], 9, &BANNED, false).unwrap();
        assert_eq!(free.tokens, vec![5, 6, 7, 5, 6, 7, 5, 6, 7]);
        let blocked = greedy_decode(&m, &[1], 9, &BANNED, true).unwrap();
        // After "a b c a b", "c" would repeat "a b c"; "d" is next best.
        assert_eq!(&blocked.tokens[..6], &[5, 6, 7, 5, 6, 8]);
        assert!(!has_repeated_trigram(&blocked.tokens));
        assert_ne!(blocked.tokens, free.tokens);
    }

    #[test]
    fn beam_of_one_is_greedy() {
        let m = cycle_model();
        for block in [false, true] {
            let cfg = DecodeConfig {
                beam_size: 1,
                budget: 12,
                length_penalty: 1.2,
                block_trigrams: block,
            };
            let b = beam_search(&m, &[1], &cfg, &BANNED, None).unwrap();
            let g = greedy_decode(&m, &[1], 12, &BANNED, block).unwrap();
            assert_eq!(b.tokens, g.tokens);
            assert!((b.logprob - g.logprob).abs() < 1e-12);
        }
    }

    #[test]
    fn budget_and_pruning_order() {
        let m = cycle_model();
        let cfg = DecodeConfig {
            beam_size: 3,
            budget: 5,
            length_penalty: 1.2,
            block_trigrams: true,
        };
        let mut trace = Vec::new();
        let h = beam_search(&m, &[1], &cfg, &BANNED, Some(&mut trace)).unwrap();
        assert!(h.tokens.len() <= 5);
        assert!(!has_repeated_trigram(&h.tokens));
        for t in &trace {
            if let Some(p) = t.best_pruned {
                assert!(t.kept.iter().all(|k| k.2 >= p));
            }
        }
        assert!(h.tokens.iter().all(|t| !BANNED.contains(t)));
    }

    #[test]
    fn eos_ends_hypotheses() {
        // After "b" the model is certain to stop.
        let mut rows = vec![vec![0.0; 9]; 9];
        for r in rows.iter_mut() {
            r[6] = 1.0;
        }
        rows[6] = vec![0.0; 9];
        rows[6][2] = 1.0;
        let m = Table::from_probs(rows);
        let cfg = DecodeConfig::default();
        let h = beam_search(&m, &[1], &cfg, &BANNED, None).unwrap();
        assert_eq!(h.tokens, vec![6]);
        assert!(h.ended_with_eos);
        assert!((h.logprob).abs() < 1e-12);
    }

    #[test]
    fn dead_end_is_an_error() {
        let m = Table::from_probs(vec![vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]; 9]);
        let cfg = DecodeConfig::default();
        assert!(beam_search(&m, &[1], &cfg, &BANNED, None).is_err());
    }
}
