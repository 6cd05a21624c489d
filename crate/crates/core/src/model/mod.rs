//! Multi-source Transformer: tensors, autodiff, layers, checkpoints.

mod attention;
mod checkpoint;
mod gradcheck;
mod graph;
mod inference;
mod matrix;
mod params;
mod transformer;

pub use attention::{attention_head, mean_cross_attention, parallel_cross_attention};
pub use checkpoint::{
    load_checkpoint, read_checkpoint_header, save_checkpoint, CheckpointHeader, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use gradcheck::{grad_check, gradcheck_config, gradcheck_example, relative_error, GradCheckEntry, GradCheckReport};
pub use graph::{Graph, ParamGrads, Var};
pub use inference::{CrossMemory, DecoderCache};
pub use matrix::{gemm, log_softmax, matmul, sinusoidal_positions, softmax_rows, AttnMask, Matrix, Real};
pub use params::{ParamId, ParamStore};
pub use transformer::{Combination, EncodedSource, Mode, ModelConfig, SeqExample, Transformer};
