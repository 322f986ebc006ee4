//! Dense `f32` tensors with a reverse-mode tape, plus the layer, loss and
//! optimizer primitives the translation models are built from.

mod conv;
mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use conv::{col2im, gemm, im2col, ConvGeometry, Mat};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, FD_STEP};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tape::{sigmoid, Activation, Gradients, Tape, Var, LEAKY_SLOPE};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("instance norm needs at least two positions per channel, got {height}x{width}")]
    DegenerateStatistics { height: usize, width: usize },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
}
