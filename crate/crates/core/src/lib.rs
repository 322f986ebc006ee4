//! Flashover early warning from body-camera video: a small autodiff engine,
//! a pix2pix-style visual-to-thermal translator, a procedural fire simulator,
//! thermal band analytics and activation probes.

// NaN-aware comparisons like `!(x >= 0.0)` are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod autodiff;
pub mod image;
pub mod models;
pub mod pipeline;
pub mod probe;
pub mod rng;
pub mod sim;
