//! Dense matrices, a recording tape for reverse-mode gradients, SGD, and a
//! finite-difference gradient oracle.

mod gradcheck;
mod matrix;
pub mod ops;
mod params;
mod rng;
mod tape;

pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, Stencil};
pub use matrix::Matrix;
pub use ops::{cross_entropy, dropout_mask, log_softmax, sigmoid, softmax_rows, tanh_map};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use rng::SeededRng;
pub use tape::{NodeId, Tape};
