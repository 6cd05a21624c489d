//! Teacher-forced training with Nesterov momentum, warm-up, validation
//! perplexity and best-checkpoint selection.

mod data;
mod optim;
mod trainer;

pub use data::{build_example, length_buckets};
pub use optim::{cross_entropy_loss, lr_at, nesterov_step, OptimizerState, TrainConfig};
pub use trainer::{perplexity, read_train_log, train_model, LogRow, TrainOutcome, TrainOutput};
