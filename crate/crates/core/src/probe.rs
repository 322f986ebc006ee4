//! Generator activation capture and grayscale export of per-channel maps.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::image::{Image, ImageError};
use crate::models::{Generator, ModelError};

pub const DEFAULT_MAX_CHANNELS: usize = 16;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("unknown layer {name:?}; valid layers: {}", valid.join(", "))]
    UnknownLayer { name: String, valid: Vec<String> },
    #[error("layer {0:?} requested twice")]
    DuplicateLayer(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Captured layer outputs in request order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivationSet {
    entries: Vec<(String, Tensor)>,
}

impl ActivationSet {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One evaluation-mode forward pass recording the named layers, plus its output.
pub fn capture_with_output(
    generator: &Generator,
    input: &Tensor,
    layer_names: &[&str],
) -> Result<(ActivationSet, Tensor), ProbeError> {
    let valid = generator.spec().layer_names();
    for (i, name) in layer_names.iter().enumerate() {
        if !valid.iter().any(|v| v == name) {
            return Err(ProbeError::UnknownLayer {
                name: name.to_string(),
                valid,
            });
        }
        if layer_names[..i].contains(name) {
            return Err(ProbeError::DuplicateLayer(name.to_string()));
        }
    }
    let mut slots: Vec<Option<Tensor>> = vec![None; layer_names.len()];
    let output = generator.infer_tapped(input, &mut |name, value| {
        if let Some(k) = layer_names.iter().position(|n| *n == name) {
            slots[k] = Some(value.clone());
        }
    })?;
    let entries = layer_names
        .iter()
        .zip(slots)
        .map(|(n, t)| {
            (
                n.to_string(),
                t.expect("every generator layer reports to the tap"),
            )
        })
        .collect();
    Ok((ActivationSet { entries }, output))
}

pub fn capture(
    generator: &Generator,
    input: &Tensor,
    layer_names: &[&str],
) -> Result<ActivationSet, ProbeError> {
    capture_with_output(generator, input, layer_names).map(|(set, _)| set)
}

/// Min-max scale one channel to `[0, 255]`; a constant channel maps to 128.
pub fn channel_map(plane: &[f32]) -> Vec<u8> {
    let (lo, hi) = plane
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) || !(hi - lo).is_finite() {
        return vec![128; plane.len()];
    }
    plane
        .iter()
        .map(|&v| ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Up to `max_channels` maps of the first batch item, tiled row-major on a
/// near-square grid.
pub fn layer_tile(activation: &Tensor, max_channels: usize) -> Result<Image, ProbeError> {
    let (_, c, h, w) = activation.dims4().map_err(ModelError::from)?;
    let k = c.min(max_channels.max(1));
    let cols = (k as f64).sqrt().ceil() as usize;
    let rows = k.div_ceil(cols);
    let mut img = Image::filled(cols * w, rows * h, [0, 0, 0]);
    for ch in 0..k {
        let map = channel_map(activation.plane(0, ch));
        let (ox, oy) = ((ch % cols) * w, (ch / cols) * h);
        for y in 0..h {
            for x in 0..w {
                let g = map[y * w + x];
                img.set_pixel(ox + x, oy + y, [g, g, g]);
            }
        }
    }
    Ok(img)
}

pub fn layer_file_name(layer: &str) -> String {
    format!("layer_{layer}.ppm")
}

/// Write one `layer_<name>.ppm` per captured layer into `out_dir`.
pub fn export_maps(
    set: &ActivationSet,
    out_dir: &Path,
    max_channels: usize,
) -> Result<Vec<PathBuf>, ProbeError> {
    fs::create_dir_all(out_dir).map_err(|e| ProbeError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut written = Vec::with_capacity(set.len());
    for (name, tensor) in set.iter() {
        let path = out_dir.join(layer_file_name(name));
        layer_tile(tensor, max_channels)?
            .write_ppm(&path)
            .map_err(|e: ImageError| ProbeError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        written.push(path);
    }
    Ok(written)
}
