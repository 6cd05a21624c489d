//! Loss, learning-rate schedule and the Nesterov momentum update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_softmax, Matrix, ParamGrads, ParamStore, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_base: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub momentum: f64,
    /// Examples per update.
    pub batch_size: usize,
    pub seed: u64,
    /// Exclude the control prefix of the target from the loss.
    pub mask_prompt: bool,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    /// Validation perplexity every this many steps (0 = only at the end).
    pub eval_interval: u64,
    /// Longest source review, in subword tokens, after truncation.
    pub max_source_len: usize,
    /// Longest target, in subword tokens (prefix and EOS included).
    pub max_target_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_base: 0.01,
            warmup_steps: 200,
            total_steps: 2000,
            momentum: 0.99,
            batch_size: 8,
            seed: 1,
            mask_prompt: false,
            clip_norm: 1.0,
            eval_interval: 200,
            max_source_len: 96,
            max_target_len: 96,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_base > 0.0) {
            return Err(Error::config("lr_base must be positive"));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::config("warmup_steps exceeds total_steps"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0,1)"));
        }
        if self.batch_size == 0 || self.max_source_len == 0 || self.max_target_len < 2 {
            return Err(Error::config("batch_size and length limits must be positive"));
        }
        if self.clip_norm < 0.0 {
            return Err(Error::config("clip_norm must be non-negative"));
        }
        Ok(())
    }
}

/// Mean per-token negative log-likelihood over non-pad targets, and the
/// number of such tokens.
pub fn cross_entropy_loss<T: Real>(logits: &Matrix<T>, targets: &[u32], pad: u32) -> Result<(f64, usize)> {
    if logits.rows() != targets.len() {
        return Err(Error::shape(format!("{} logit rows for {} targets", logits.rows(), targets.len())));
    }
    let mut total = 0.0;
    let mut count = 0;
    for (r, &t) in targets.iter().enumerate() {
        if t == pad {
            continue;
        }
        if t as usize >= logits.cols() {
            return Err(Error::shape(format!("target {t} outside {} classes", logits.cols())));
        }
        total -= log_softmax(logits.row(r))[t as usize];
        count += 1;
    }
    if count == 0 {
        return Err(Error::data("every target position is padding"));
    }
    Ok((total / count as f64, count))
}

/// Linear warm-up to `lr_base`, constant afterwards.
pub fn lr_at(step: u64, cfg: &TrainConfig) -> f64 {
    if step < cfg.warmup_steps {
        cfg.lr_base * step as f64 / cfg.warmup_steps as f64
    } else {
        cfg.lr_base
    }
}

/// Momentum buffers mirroring the parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub velocity: Vec<Matrix<T>>,
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        OptimizerState {
            velocity: params.values().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
            step: 0,
        }
    }
}

/// `v <- mu v - lr g; theta <- theta + mu v - lr g`.
///
/// Nothing is modified when a gradient is non-finite.
pub fn nesterov_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &ParamGrads<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if grads.grads.len() != params.len() || state.velocity.len() != params.len() {
        return Err(Error::shape("gradient / velocity / parameter counts differ"));
    }
    if !grads.all_finite() {
        return Err(Error::numerical(format!("non-finite gradient at step {}", state.step + 1)));
    }
    let (mu, lr) = (T::lit(momentum), T::lit(lr));
    for ((p, g), v) in params.values_mut().iter_mut().zip(&grads.grads).zip(&mut state.velocity) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::shape("gradient shape differs from parameter"));
        }
        for ((theta, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = mu * *vi - lr * gi;
            *theta += mu * *vi - lr * gi;
        }
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_v() {
        let logits = Matrix::<f64>::zeros(3, 7);
        let (loss, n) = cross_entropy_loss(&logits, &[1, 2, 3], 0).unwrap();
        assert_eq!(n, 3);
        assert!((loss - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_token_hand_case() {
        let logits = Matrix::from_rows(&[vec![1.0, 2.0, 0.5], vec![0.0, -1.0, 3.0]]);
        let (loss, n) = cross_entropy_loss(&logits, &[1, 2], 9).unwrap();
        let l1 = -(2f64.exp() / (1f64.exp() + 2f64.exp() + 0.5f64.exp())).ln();
        let l2 = -(3f64.exp() / (1.0 + (-1f64).exp() + 3f64.exp())).ln();
        assert_eq!(n, 2);
        assert!((loss - (l1 + l2) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn confident_logits_approach_zero_and_pad_is_skipped() {
        let logits = Matrix::from_rows(&[vec![40.0, 0.0], vec![0.0, 0.0]]);
        let (loss, n) = cross_entropy_loss(&logits, &[0, 5], 5).unwrap();
        assert_eq!(n, 1);
        assert!(loss < 1e-15);
        assert!(cross_entropy_loss(&logits, &[5, 5], 5).is_err());
    }

    #[test]
    fn warmup_schedule() {
        let cfg = TrainConfig {
            lr_base: 0.01,
            warmup_steps: 100,
            ..TrainConfig::default()
        };
        assert_eq!(lr_at(0, &cfg), 0.0);
        assert!((lr_at(50, &cfg) - 0.005).abs() < 1e-15);
        assert_eq!(lr_at(100, &cfg), 0.01);
        assert_eq!(lr_at(5000, &cfg), 0.01);
        let no_warmup = TrainConfig {
            warmup_steps: 0,
            ..cfg
        };
        assert_eq!(lr_at(0, &no_warmup), 0.01);
    }

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("theta", Matrix::filled(1, 1, v));
        s
    }

    fn grads(v: f64) -> ParamGrads<f64> {
        ParamGrads {
            grads: vec![Matrix::filled(1, 1, v)],
        }
    }

    #[test]
    fn quadratic_step_by_hand() {
        // f = theta^2 / 2, so the gradient equals theta.
        let mut p = scalar_store(1.0);
        let mut st = OptimizerState::new(&p);
        nesterov_step(&mut p, &grads(1.0), &mut st, 0.1, 0.9).unwrap();
        assert!((st.velocity[0].get(0, 0) + 0.1).abs() < 1e-15);
        assert!((p.values()[0].get(0, 0) - 0.81).abs() < 1e-15);
    }

    #[test]
    fn zero_momentum_is_sgd_and_zero_gradient_is_fixed_point() {
        let mut p = scalar_store(2.0);
        let mut st = OptimizerState::new(&p);
        nesterov_step(&mut p, &grads(0.5), &mut st, 0.1, 0.0).unwrap();
        assert!((p.values()[0].get(0, 0) - 1.95).abs() < 1e-15);
        let mut q = scalar_store(3.0);
        let mut st = OptimizerState::new(&q);
        nesterov_step(&mut q, &grads(0.0), &mut st, 0.1, 0.9).unwrap();
        assert_eq!(q.values()[0].get(0, 0), 3.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = scalar_store(1.0);
        let mut st = OptimizerState::new(&p);
        let err = nesterov_step(&mut p, &grads(f64::NAN), &mut st, 0.1, 0.9).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert_eq!(p.values()[0].get(0, 0), 1.0);
        assert_eq!(st.step, 0);
    }
}
