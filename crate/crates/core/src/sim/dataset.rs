use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Scenario, ScenarioParams, SimError};
use crate::analytics::BandCounts;
use crate::image::Image;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One visual/thermal pair with ground truth taken from the temperature field.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedFrame {
    pub t_sec: f64,
    pub visual: Image,
    pub thermal: Image,
    pub truth: BandCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthCounts {
    pub red: u64,
    pub yellow: u64,
    pub green: u64,
    pub blue: u64,
    pub background: u64,
}

impl From<&BandCounts> for TruthCounts {
    fn from(c: &BandCounts) -> Self {
        Self {
            red: c.red,
            yellow: c.yellow,
            green: c.green,
            blue: c.blue,
            background: c.background,
        }
    }
}

impl TruthCounts {
    pub fn to_band_counts(self) -> BandCounts {
        BandCounts {
            red: self.red,
            yellow: self.yellow,
            green: self.green,
            blue: self.blue,
            background: self.background,
            total: self.red + self.yellow + self.green + self.blue + self.background,
            mass: None,
        }
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub t_sec: f64,
    pub visual: String,
    pub thermal: String,
    pub split: Split,
    pub truth_counts: TruthCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: Vec<PairedFrame>,
    pub manifest: Vec<ManifestEntry>,
}

impl Dataset {
    pub fn split(&self, which: Split) -> Vec<PairedFrame> {
        self.frames
            .iter()
            .zip(&self.manifest)
            .filter(|(_, m)| m.split == which)
            .map(|(f, _)| f.clone())
            .collect()
    }
}

pub fn frame_file_name(t_sec: f64) -> String {
    format!("frame_t{:08}ms.ppm", (t_sec * 1000.0).round() as u64)
}

/// Every fourth sampled frame is held out, interleaved through the timeline.
fn split_for(index: usize) -> Split {
    if (index + 1).is_multiple_of(4) {
        Split::Test
    } else {
        Split::Train
    }
}

pub fn generate_dataset(params: &ScenarioParams) -> Result<Dataset, SimError> {
    let scenario = Scenario::new(params.clone())?;
    let timeline = params.timeline();
    let mut frames = Vec::with_capacity(params.frames);
    let mut manifest = Vec::with_capacity(params.frames);
    for j in 0..params.frames {
        let t = timeline[j * timeline.len() / params.frames];
        let state = scenario.state_at(t);
        let truth = state.truth_counts();
        let name = frame_file_name(t);
        manifest.push(ManifestEntry {
            t_sec: t,
            visual: format!("visual/{name}"),
            thermal: format!("thermal/{name}"),
            split: split_for(j),
            truth_counts: TruthCounts::from(&truth),
        });
        frames.push(PairedFrame {
            t_sec: t,
            visual: scenario.render_visual(&state),
            thermal: scenario.render_thermal(&state),
            truth,
        });
    }
    Ok(Dataset { frames, manifest })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SimError {
    SimError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), SimError> {
    for sub in ["visual", "thermal"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
    }
    let mut lines = String::new();
    for (frame, entry) in dataset.frames.iter().zip(&dataset.manifest) {
        let vp = dir.join(&entry.visual);
        frame.visual.write_ppm(&vp).map_err(|e| io_err(&vp, e))?;
        let tp = dir.join(&entry.thermal);
        frame.thermal.write_ppm(&tp).map_err(|e| io_err(&tp, e))?;
        lines.push_str(&serde_json::to_string(entry).expect("manifest entry serializes"));
        lines.push('\n');
    }
    let mp = dir.join(MANIFEST_FILE);
    fs::write(&mp, lines).map_err(|e| io_err(&mp, e))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, SimError> {
    let mp = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mp).map_err(|e| io_err(&mp, e))?;
    let mut frames = Vec::new();
    let mut manifest = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| SimError::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?;
        let vp = dir.join(&entry.visual);
        let visual = Image::read_ppm(&vp).map_err(|e| io_err(&vp, e))?;
        let tp = dir.join(&entry.thermal);
        let thermal = Image::read_ppm(&tp).map_err(|e| io_err(&tp, e))?;
        if (visual.width(), visual.height()) != (thermal.width(), thermal.height()) {
            return Err(SimError::Manifest {
                line: i + 1,
                message: "visual and thermal frames differ in size".into(),
            });
        }
        frames.push(PairedFrame {
            t_sec: entry.t_sec,
            truth: entry.truth_counts.to_band_counts(),
            visual,
            thermal,
        });
        manifest.push(entry);
    }
    Ok(Dataset { frames, manifest })
}
