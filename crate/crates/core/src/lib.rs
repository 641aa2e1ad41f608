//! Query expansion with a sequence-to-sequence attention model.
//!
//! Training pairs come from sentence pairs whose target side is reduced to
//! keywords picked by a max-pooled BiLSTM encoder. The expander is an
//! encoder–attention–decoder LSTM trained with masked softmax cross-entropy
//! and plain SGD. The [`eval`] module measures what expansion does to ranked
//! retrieval, answer preselection and headline classification.
//!
//! All numeric code is generic over [`Scalar`] (`f64` and `f32`); the aliases
//! below fix the precision.

pub mod dataset;
pub mod encoder;
pub mod eval;
pub mod error;
pub mod scalar;
pub mod seq2seq;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};

pub type Matrix64 = tensor::Matrix<f64>;
pub type Matrix32 = tensor::Matrix<f32>;
pub type SentenceEncoder64 = encoder::SentenceEncoder<f64>;
pub type SentenceEncoder32 = encoder::SentenceEncoder<f32>;
pub type Seq2Seq64 = seq2seq::Seq2Seq<f64>;
pub type Seq2Seq32 = seq2seq::Seq2Seq<f32>;
