//! U-Net generator, patch discriminator, adversarial + L1 objectives, the
//! training loop and checkpoint persistence.

mod checkpoint;
mod discriminator;
mod generator;
mod loss;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, TrainingMeta};
pub use discriminator::{build_discriminator, Discriminator, DiscriminatorSpec};
pub use generator::{build_generator, ForwardOptions, Generator, GeneratorSpec};
pub use loss::{discriminator_loss, generator_loss, GeneratorLoss};
pub use params::ParamSet;
pub use train::{enhance, heldout_l1, train, EpochStats, TrainConfig, TrainOutcome};

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tensor};
use crate::image::Image;

/// Standard deviation of the Gaussian weight initialisation.
pub const INIT_STD: f32 = 0.02;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("frame is {found_w}x{found_h} but the model expects {expected}x{expected}")]
    SizeMismatch {
        expected: usize,
        found_w: usize,
        found_h: usize,
    },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}, step {step}: {what} = {value}")]
    Diverged {
        epoch: usize,
        step: usize,
        what: &'static str,
        value: f64,
    },
}

/// Whether a forward pass is stochastic (training) or deterministic.
pub enum Mode<'r> {
    Train(&'r mut dyn RngCore),
    Eval,
}

pub(crate) fn init_weight<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    Tensor::randn(shape, INIT_STD, rng)
}

/// `1×3×H×W` tensor with 8-bit samples mapped to `[-1, 1]` as `v / 127.5 - 1`.
pub fn image_to_tensor(image: &Image) -> Tensor {
    let (w, h) = (image.width(), image.height());
    let plane = w * h;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, px) in image.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = normalize_sample(px[c]);
        }
    }
    Tensor::new(&[1, 3, h, w], data).expect("image dimensions are positive")
}

pub fn normalize_sample(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Inverse of [`normalize_sample`]: `(x + 1) · 127.5`, clamped, rounded half up.
pub fn denormalize_sample(x: f32) -> u8 {
    let v = (x + 1.0) * 127.5;
    if v.is_nan() {
        return 0;
    }
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// First sample of a `N×3×H×W` tensor as an RGB8 image.
pub fn tensor_to_image(t: &Tensor) -> Result<Image, ModelError> {
    let (_, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(ModelError::Config(format!(
            "expected 3 channels for an RGB image, got {c}"
        )));
    }
    let plane = h * w;
    let mut data = vec![0u8; 3 * plane];
    for i in 0..plane {
        for ch in 0..3 {
            data[3 * i + ch] = denormalize_sample(t.data()[ch * plane + i]);
        }
    }
    Ok(Image::new(w, h, data).expect("tensor extents are positive"))
}
