//! End-to-end run: simulate, train, enhance, analyze, predict.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    count_bands, detect, evaluate, write_report, AlertReport, AnalyticsError, BandSeries,
    CountMode, FlashoverAlert, PredictorConfig,
};
use crate::image::Image;
use crate::models::{enhance, save_checkpoint, train, Generator, ModelError, TrainConfig};
use crate::sim::{
    frame_file_name, generate_dataset, write_dataset, Scenario, ScenarioParams, Split,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_NO_ALERT: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("invalid parameters: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl PipelineError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Model(ModelError::Diverged { .. }) => EXIT_DIVERGED,
            PipelineError::Io { .. } => EXIT_IO,
            _ => EXIT_FAILURE,
        }
    }
}

/// Which generated frames feed the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzeSource {
    /// Every frame of the scenario timeline, translated by the generator.
    #[default]
    Stream,
    /// Only the held-out test frames.
    Heldout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2eParams {
    pub scenario: ScenarioParams,
    pub train: TrainConfig,
    pub predictor: PredictorConfig,
    pub mode: CountMode,
    pub analyze: AnalyzeSource,
}

impl E2eParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            scenario: ScenarioParams {
                seed,
                ..ScenarioParams::default()
            },
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            predictor: PredictorConfig::default(),
            mode: CountMode::default(),
            analyze: AnalyzeSource::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub epochs: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub flashover_time_sec: Option<f64>,
    pub initial_heldout_l1: Option<f64>,
    pub final_heldout_l1: Option<f64>,
    /// Pearson correlation of hot fraction, generated vs. simulator thermal, on held-out frames.
    pub heldout_hot_fraction_correlation: Option<f64>,
    pub analyzed_frames: usize,
    pub alert: Option<AlertReport>,
    pub lead_time_sec: Option<f64>,
    pub exit_code: i32,
}

impl Summary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let denom = (saa * sbb).sqrt();
    (denom > 0.0).then(|| sab / denom)
}

/// Band-count series over timestamped frames.
pub fn analyze_frames(
    frames: &[(f64, Image)],
    mode: CountMode,
) -> Result<BandSeries, AnalyticsError> {
    let mut series = BandSeries::new();
    for (t, img) in frames {
        series.push(*t, count_bands(img, mode))?;
    }
    Ok(series)
}

/// Detect on `series` and attach the lead time when the truth is known.
pub fn predict(
    series: &BandSeries,
    config: &PredictorConfig,
    truth_sec: Option<f64>,
) -> Result<Option<FlashoverAlert>, AnalyticsError> {
    Ok(detect(series, config)?.map(|a| match truth_sec {
        Some(t) => evaluate(a, t),
        None => a,
    }))
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|e| PipelineError::io(path, e))
}

fn hot(img: &Image, mode: CountMode) -> f64 {
    count_bands(img, mode).hot_fraction().unwrap_or(0.0)
}

/// Run every stage, writing artifacts under `out_dir`. `Ok` carries exit code
/// 0 (alert raised) or 3 (no alert); failures map through [`PipelineError::exit_code`].
pub fn run_e2e(
    params: &E2eParams,
    out_dir: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<Summary, PipelineError> {
    params
        .scenario
        .validate()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    params.predictor.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;

    log("simulate: generating paired frames");
    let dataset =
        generate_dataset(&params.scenario).map_err(|e| PipelineError::Config(e.to_string()))?;
    let data_dir = out_dir.join("dataset");
    write_dataset(&dataset, &data_dir).map_err(|e| PipelineError::io(&data_dir, e))?;
    let train_set = dataset.split(Split::Train);
    let test_set = dataset.split(Split::Test);

    log(&format!(
        "train: {} pairs, {} epochs",
        train_set.len(),
        params.train.epochs
    ));
    let outcome = train(&train_set, &test_set, &params.train, &mut |s| {
        if s.epoch == 1 || s.epoch % 10 == 0 || s.epoch == params.train.epochs {
            log(&format!(
                "  epoch {:>4}  d {:.4}  g_adv {:.4}  g_l1 {:.4}  heldout_l1 {}",
                s.epoch,
                s.d_loss,
                s.g_adversarial,
                s.g_l1,
                s.heldout_l1.map_or("-".into(), |v| format!("{v:.4}"))
            ));
        }
    })?;
    let ckpt_path = out_dir.join("checkpoint.fgan");
    save_checkpoint(&outcome.checkpoint, &ckpt_path)
        .map_err(|e| PipelineError::io(&ckpt_path, e))?;
    let generator = &outcome.checkpoint.generator;

    log(&format!("enhance: {} held-out frames", test_set.len()));
    let enhanced_dir = out_dir.join("enhanced");
    fs::create_dir_all(&enhanced_dir).map_err(|e| PipelineError::io(&enhanced_dir, e))?;
    let mut heldout_generated = Vec::with_capacity(test_set.len());
    for frame in &test_set {
        let img = enhance(generator, &frame.visual)?;
        let path = enhanced_dir.join(frame_file_name(frame.t_sec));
        img.write_ppm(&path)
            .map_err(|e| PipelineError::io(&path, e))?;
        heldout_generated.push((frame.t_sec, img));
    }
    let gen_hot: Vec<f64> = heldout_generated
        .iter()
        .map(|(_, i)| hot(i, params.mode))
        .collect();
    let truth_hot: Vec<f64> = test_set
        .iter()
        .map(|f| hot(&f.thermal, params.mode))
        .collect();

    let analyzed = match params.analyze {
        AnalyzeSource::Heldout => heldout_generated,
        AnalyzeSource::Stream => stream_frames(generator, &params.scenario)?,
    };
    log(&format!(
        "analyze: {} generated thermal frames",
        analyzed.len()
    ));
    let series = analyze_frames(&analyzed, params.mode)?;
    write(&out_dir.join("report.csv"), &write_report(&series))?;

    log("predict");
    let alert = predict(
        &series,
        &params.predictor,
        params.scenario.flashover_time_sec,
    )?;
    let alert_report = alert.map(|a| AlertReport::new(a, params.predictor));
    if let Some(r) = &alert_report {
        write(&out_dir.join("alert.json"), &r.to_json())?;
    }
    let exit_code = if alert.is_some() {
        EXIT_OK
    } else {
        EXIT_NO_ALERT
    };
    let summary = Summary {
        seed: params.scenario.seed,
        epochs: params.train.epochs,
        train_pairs: train_set.len(),
        test_pairs: test_set.len(),
        flashover_time_sec: params.scenario.flashover_time_sec,
        initial_heldout_l1: outcome.initial_heldout_l1,
        final_heldout_l1: outcome.history.last().and_then(|s| s.heldout_l1),
        heldout_hot_fraction_correlation: pearson(&gen_hot, &truth_hot),
        analyzed_frames: series.len(),
        lead_time_sec: alert.and_then(|a| a.lead_time_sec),
        alert: alert_report,
        exit_code,
    };
    write(&out_dir.join("summary.json"), &summary.to_json())?;
    Ok(summary)
}

/// Generator translations of every visual frame on the scenario timeline.
pub fn stream_frames(
    generator: &Generator,
    scenario: &ScenarioParams,
) -> Result<Vec<(f64, Image)>, PipelineError> {
    let sc = Scenario::new(scenario.clone()).map_err(|e| PipelineError::Config(e.to_string()))?;
    sc.timeline_states()
        .map(|state| Ok((state.t_sec, enhance(generator, &sc.render_visual(&state))?)))
        .collect()
}
