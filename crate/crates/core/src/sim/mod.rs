//! Procedural compartment-fire scenarios rendered as paired visual/thermal frames.

mod dataset;
mod noise;
mod render;
mod scene;

pub use dataset::{
    frame_file_name, generate_dataset, read_dataset, write_dataset, Dataset, ManifestEntry,
    PairedFrame, Split, TruthCounts, MANIFEST_FILE,
};
pub use render::JITTER;
pub use scene::{PixelRect, Scenario, SceneState};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
}

/// Furniture rectangle in normalised frame coordinates (`0..1`, origin top-left).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Furniture {
    pub label: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

fn default_furniture() -> Vec<Furniture> {
    vec![
        Furniture {
            label: "table".into(),
            x0: 0.56,
            y0: 0.62,
            x1: 0.86,
            y1: 0.75,
        },
        Furniture {
            label: "sofa".into(),
            x0: 0.08,
            y0: 0.70,
            x1: 0.40,
            y1: 0.88,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub duration_sec: f64,
    pub fps: u32,
    /// `None` makes a control scenario that never flashes over.
    pub flashover_time_sec: Option<f64>,
    pub image_size: usize,
    pub seed: u64,
    /// Ignition point in normalised frame coordinates `[x, y]`.
    pub fire_origin: [f64; 2],
    /// Logistic rate (1/s) of flame-area growth.
    pub growth_rate: f64,
    pub rollover_lead_sec: f64,
    /// Number of pairs sampled evenly from the timeline for the dataset.
    pub frames: usize,
    pub furniture: Vec<Furniture>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            duration_sec: 240.0,
            fps: 1,
            flashover_time_sec: Some(200.0),
            image_size: 64,
            seed: 0,
            fire_origin: [0.3, 0.8],
            growth_rate: 0.05,
            rollover_lead_sec: 60.0,
            frames: 40,
            furniture: default_furniture(),
        }
    }
}

impl ScenarioParams {
    pub fn control(seed: u64) -> Self {
        Self {
            flashover_time_sec: None,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.duration_sec > 0.0) || !self.duration_sec.is_finite() {
            return bad(format!(
                "duration must be positive, got {}",
                self.duration_sec
            ));
        }
        if self.fps == 0 {
            return bad("fps must be at least 1".into());
        }
        if let Some(f) = self.flashover_time_sec {
            if !(f > 0.0 && f <= self.duration_sec) {
                return bad(format!(
                    "flashover time {f} must lie in (0, {}]",
                    self.duration_sec
                ));
            }
        }
        if self.image_size < 4 {
            return bad(format!(
                "image size must be at least 4, got {}",
                self.image_size
            ));
        }
        if !(self.growth_rate > 0.0) || !self.growth_rate.is_finite() {
            return bad(format!(
                "growth rate must be positive, got {}",
                self.growth_rate
            ));
        }
        if !(self.rollover_lead_sec >= 0.0) {
            return bad(format!(
                "rollover lead must be non-negative, got {}",
                self.rollover_lead_sec
            ));
        }
        if self.fire_origin.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad(format!(
                "fire origin {:?} must lie inside the unit square",
                self.fire_origin
            ));
        }
        for f in &self.furniture {
            if !(0.0 <= f.x0
                && f.x0 < f.x1
                && f.x1 <= 1.0
                && 0.0 <= f.y0
                && f.y0 < f.y1
                && f.y1 <= 1.0)
            {
                return bad(format!(
                    "furniture {:?} is not a rectangle in the unit square",
                    f.label
                ));
            }
        }
        let steps = self.timeline_len();
        if self.frames == 0 || self.frames > steps {
            return bad(format!(
                "frames must be between 1 and {steps} (duration x fps), got {}",
                self.frames
            ));
        }
        Ok(())
    }

    /// Number of frames on the full-rate timeline `t = i / fps`, `t < duration`.
    pub fn timeline_len(&self) -> usize {
        (self.duration_sec * self.fps as f64).ceil() as usize
    }

    pub fn timeline(&self) -> Vec<f64> {
        (0..self.timeline_len())
            .map(|i| i as f64 / self.fps as f64)
            .collect()
    }
}
