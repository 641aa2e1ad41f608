//! Encoder–attention–decoder expansion model: training, greedy decoding and
//! checkpoints.

mod check;
mod checkpoint;
mod model;
mod train;

pub use check::{check_model, full_model_gradient_check, MODEL_CHECK_EPS};
pub use checkpoint::{
    parse_container, read_container, CheckpointKind, Container, Manifest, TensorEntry, FORMAT_VERSION, MAGIC,
};
pub use model::{
    AttentionContext, AttentionParams, DecodeResult, DecodeTrace, DecoderParams, DecoderState, ModelConfig, Seq2Seq,
    StepOutput,
};
pub use train::{log_to_csv, EncodedExample, EpochLog, TrainConfig};

/// Default cap on generated expansion tokens.
pub const MAX_DECODE_STEPS: usize = 6;
