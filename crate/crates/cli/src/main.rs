use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use flashover_core::analytics::{
    detect_fractions, evaluate, parse_report, report_fractions, write_report, AlertReport,
    CountMode, PredictorConfig,
};
use flashover_core::image::{Image, ImageError};
use flashover_core::models::{
    enhance, image_to_tensor, load_checkpoint, save_checkpoint, train, CheckpointError, ModelError,
    TrainConfig,
};
use flashover_core::pipeline::{
    analyze_frames, run_e2e, AnalyzeSource, E2eParams, PipelineError, EXIT_DIVERGED, EXIT_FAILURE,
    EXIT_IO, EXIT_NO_ALERT, EXIT_OK,
};
use flashover_core::probe::{capture, export_maps, ProbeError, DEFAULT_MAX_CHANNELS};
use flashover_core::sim::{
    generate_dataset, read_dataset, write_dataset, ScenarioParams, SimError, Split, MANIFEST_FILE,
};

#[derive(Parser)]
#[command(
    name = "flashover",
    version,
    about = "Flashover early warning from body-camera frames"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a paired visual/thermal dataset from a simulated fire.
    Simulate(SimulateArgs),
    /// Train the visual-to-thermal translator on a dataset.
    Train(TrainArgs),
    /// Translate visual frames into thermal-palette frames.
    Enhance(EnhanceArgs),
    /// Count thermal bands per frame and write a CSV report.
    Analyze(AnalyzeArgs),
    /// Run the flashover detector over a CSV report.
    Predict(PredictArgs),
    /// Export generator activations as grayscale tiles.
    Probe(ProbeArgs),
    /// Simulate, train, enhance, analyze and predict in one run.
    E2e(E2eArgs),
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    frames: usize,
    #[arg(long, default_value_t = 1)]
    fps: u32,
    /// Flashover instant in seconds, or `none` for a control scenario.
    #[arg(long, default_value = "200", value_parser = parse_flashover)]
    flashover_at: Flashover,
    #[arg(long, default_value_t = 64)]
    size: usize,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 2e-4)]
    lr: f32,
    #[arg(long = "lambda-l1", default_value_t = 100.0)]
    lambda_l1: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct EnhanceArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// A PPM file, a directory of PPM files, or a dataset directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Which dataset frames to translate when `--in` holds a manifest.
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    split: SplitArg,
}

#[derive(Args, Serialize)]
struct AnalyzeArgs {
    /// Directory of frame PPMs, or a dataset directory (its thermal frames).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::NearestAnchor)]
    mode: ModeArg,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0.004)]
    theta: f64,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 3)]
    consecutive: usize,
    #[arg(long, default_value_t = 20.0)]
    warmup: f64,
    /// Ground-truth flashover time, for lead-time evaluation.
    #[arg(long)]
    truth: Option<f64>,
    #[arg(long)]
    alert: PathBuf,
}

#[derive(Args, Serialize)]
struct ProbeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Comma-separated layer names; all layers when omitted.
    #[arg(long, value_delimiter = ',')]
    layers: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_CHANNELS)]
    max_channels: usize,
}

#[derive(Args, Serialize)]
struct E2eArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value = "200", value_parser = parse_flashover)]
    flashover_at: Flashover,
    #[arg(long, value_enum, default_value_t = ModeArg::NearestAnchor)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = SourceArg::Stream)]
    analyze: SourceArg,
}

#[derive(Clone, Copy, Serialize)]
#[serde(untagged)]
enum Flashover {
    At(f64),
    #[serde(serialize_with = "none_literal")]
    None,
}

fn none_literal<S: serde::Serializer>(s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str("none")
}

impl Flashover {
    fn seconds(self) -> Option<f64> {
        match self {
            Flashover::At(t) => Some(t),
            Flashover::None => None,
        }
    }
}

fn parse_flashover(s: &str) -> Result<Flashover, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(Flashover::None);
    }
    s.parse()
        .map(Flashover::At)
        .map_err(|_| format!("expected seconds or `none`, got {s:?}"))
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum ModeArg {
    NearestAnchor,
    ChannelSum,
}

impl From<ModeArg> for CountMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::NearestAnchor => CountMode::NearestAnchor,
            ModeArg::ChannelSum => CountMode::ChannelSum,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SourceArg {
    Stream,
    Heldout,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
enum SplitArg {
    All,
    Train,
    Test,
}

/// Error with the process exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_IO, format!("{}: {e}", path.display()))
    }
}

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        let code = if matches!(e, ImageError::Io { .. }) {
            EXIT_IO
        } else {
            EXIT_FAILURE
        };
        Self::new(code, e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = if matches!(e, SimError::Io { .. }) {
            EXIT_IO
        } else {
            EXIT_FAILURE
        };
        Self::new(code, e)
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        let code = if matches!(e, CheckpointError::Io { .. }) {
            EXIT_IO
        } else {
            EXIT_FAILURE
        };
        Self::new(code, e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let code = if matches!(e, ModelError::Diverged { .. }) {
            EXIT_DIVERGED
        } else {
            EXIT_FAILURE
        };
        Self::new(code, e)
    }
}

impl From<ProbeError> for Failure {
    fn from(e: ProbeError) -> Self {
        let code = if matches!(e, ProbeError::Io { .. }) {
            EXIT_IO
        } else {
            EXIT_FAILURE
        };
        Self::new(code, e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Self::new(e.exit_code(), e)
    }
}

impl From<flashover_core::analytics::AnalyticsError> for Failure {
    fn from(e: flashover_core::analytics::AnalyticsError) -> Self {
        Self::new(EXIT_FAILURE, e)
    }
}

fn print_config(command: &str, config: &impl Serialize) {
    let value = serde_json::json!({ "command": command, "config": config });
    println!(
        "{}",
        serde_json::to_string_pretty(&value).expect("config serializes")
    );
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

/// Timestamp encoded in a `frame_t<ms>ms.ppm` name.
fn frame_time(path: &Path) -> Option<f64> {
    let name = path.file_name()?.to_str()?;
    let ms: u64 = name
        .strip_prefix("frame_t")?
        .strip_suffix("ms.ppm")?
        .parse()
        .ok()?;
    Some(ms as f64 / 1000.0)
}

/// Timestamped PPM frames of a directory, ordered by time.
fn list_frames(dir: &Path) -> Result<Vec<(f64, PathBuf)>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("ppm") {
            continue;
        }
        let t = frame_time(&path).ok_or_else(|| {
            Failure::new(
                EXIT_FAILURE,
                format!(
                    "{}: frame names must look like frame_t00012000ms.ppm",
                    path.display()
                ),
            )
        })?;
        frames.push((t, path));
    }
    frames.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(frames)
}

fn simulate(args: &SimulateArgs) -> Result<i32, Failure> {
    let params = ScenarioParams {
        seed: args.seed,
        frames: args.frames,
        fps: args.fps,
        flashover_time_sec: args.flashover_at.seconds(),
        image_size: args.size,
        ..ScenarioParams::default()
    };
    print_config("simulate", &params);
    let dataset = generate_dataset(&params)?;
    write_dataset(&dataset, &args.out)?;
    eprintln!(
        "wrote {} pairs ({} train, {} test) to {}",
        dataset.frames.len(),
        dataset.split(Split::Train).len(),
        dataset.split(Split::Test).len(),
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn train_cmd(args: &TrainArgs) -> Result<i32, Failure> {
    let dataset = read_dataset(&args.data)?;
    let size = dataset
        .frames
        .first()
        .map(|f| f.visual.width())
        .ok_or_else(|| Failure::new(EXIT_FAILURE, "dataset has no frames"))?;
    let config = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        lambda_l1: args.lambda_l1,
        seed: args.seed,
        image_size: size,
        ..TrainConfig::default()
    };
    print_config(
        "train",
        &serde_json::json!({ "data": args.data, "out": args.out, "train": config }),
    );
    let train_set = dataset.split(Split::Train);
    let test_set = dataset.split(Split::Test);
    let outcome = train(&train_set, &test_set, &config, &mut |s| {
        eprintln!(
            "epoch {:>4}  d {:.4}  g_adv {:.4}  g_l1 {:.4}  heldout_l1 {}",
            s.epoch,
            s.d_loss,
            s.g_adversarial,
            s.g_l1,
            s.heldout_l1.map_or("-".into(), |v| format!("{v:.4}"))
        )
    })?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_checkpoint(&outcome.checkpoint, &args.out)?;
    Ok(EXIT_OK)
}

fn enhance_cmd(args: &EnhanceArgs) -> Result<i32, Failure> {
    print_config("enhance", args);
    let ckpt = load_checkpoint(&args.ckpt)?;
    let inputs: Vec<PathBuf> = if args.input.is_file() {
        vec![args.input.clone()]
    } else if args.input.join(MANIFEST_FILE).is_file() {
        read_dataset(&args.input)?
            .manifest
            .into_iter()
            .filter(|m| match args.split {
                SplitArg::All => true,
                SplitArg::Train => m.split == Split::Train,
                SplitArg::Test => m.split == Split::Test,
            })
            .map(|m| args.input.join(m.visual))
            .collect()
    } else {
        list_frames(&args.input)?
            .into_iter()
            .map(|(_, p)| p)
            .collect()
    };
    create_dir(&args.out)?;
    for path in &inputs {
        let visual = Image::read_ppm(path)?;
        let out = args
            .out
            .join(path.file_name().expect("input files have names"));
        enhance(&ckpt.generator, &visual)?.write_ppm(&out)?;
    }
    eprintln!(
        "translated {} frames into {}",
        inputs.len(),
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn analyze_cmd(args: &AnalyzeArgs) -> Result<i32, Failure> {
    print_config("analyze", args);
    let paths: Vec<(f64, PathBuf)> = if args.input.join(MANIFEST_FILE).is_file() {
        read_dataset(&args.input)?
            .manifest
            .into_iter()
            .map(|m| (m.t_sec, args.input.join(m.thermal)))
            .collect()
    } else {
        list_frames(&args.input)?
    };
    let frames = paths
        .into_iter()
        .map(|(t, p)| Ok((t, Image::read_ppm(&p)?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let series = analyze_frames(&frames, args.mode.into())?;
    write_file(&args.report, &write_report(&series))?;
    eprintln!(
        "analyzed {} frames into {}",
        series.len(),
        args.report.display()
    );
    Ok(EXIT_OK)
}

fn predict_cmd(args: &PredictArgs) -> Result<i32, Failure> {
    let config = PredictorConfig {
        window: args.window,
        theta: args.theta,
        consecutive: args.consecutive,
        warmup_sec: args.warmup,
    };
    print_config(
        "predict",
        &serde_json::json!({
            "report": args.report, "alert": args.alert, "truth": args.truth, "predictor": config
        }),
    );
    let text = fs::read_to_string(&args.report).map_err(|e| Failure::io(&args.report, e))?;
    let rows = parse_report(&text)?;
    let (times, fractions) = report_fractions(&rows);
    match detect_fractions(&times, &fractions, &config)? {
        Some(alert) => {
            let alert = match args.truth {
                Some(t) => evaluate(alert, t),
                None => alert,
            };
            write_file(&args.alert, &AlertReport::new(alert, config).to_json())?;
            eprintln!(
                "alert at t={} s{}",
                alert.alert_time_sec,
                alert
                    .lead_time_sec
                    .map_or(String::new(), |l| format!(", lead {l} s"))
            );
            Ok(EXIT_OK)
        }
        None => {
            eprintln!("no alert raised");
            Ok(EXIT_NO_ALERT)
        }
    }
}

fn probe_cmd(args: &ProbeArgs) -> Result<i32, Failure> {
    print_config("probe", args);
    let ckpt = load_checkpoint(&args.ckpt)?;
    let image = Image::read_ppm(&args.input)?;
    let names: Vec<String> = if args.layers.is_empty() {
        ckpt.generator.spec().layer_names()
    } else {
        args.layers.clone()
    };
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let size = ckpt.generator.spec().image_size;
    if image.width() != size || image.height() != size {
        return Err(Failure::new(
            EXIT_FAILURE,
            format!(
                "input is {}x{}, the model expects {size}x{size}",
                image.width(),
                image.height()
            ),
        ));
    }
    let set = capture(&ckpt.generator, &image_to_tensor(&image), &refs)?;
    let written = export_maps(&set, &args.out, args.max_channels)?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(EXIT_OK)
}

fn e2e_cmd(args: &E2eArgs) -> Result<i32, Failure> {
    let mut params = E2eParams::with_seed(args.seed);
    params.scenario.flashover_time_sec = args.flashover_at.seconds();
    params.train.epochs = args.epochs;
    params.mode = args.mode.into();
    params.analyze = match args.analyze {
        SourceArg::Stream => AnalyzeSource::Stream,
        SourceArg::Heldout => AnalyzeSource::Heldout,
    };
    print_config(
        "e2e",
        &serde_json::json!({ "out": args.out, "params": params }),
    );
    let summary = run_e2e(&params, &args.out, &mut |line| eprintln!("{line}"))?;
    match summary.lead_time_sec {
        Some(lead) => eprintln!("lead time {lead} s"),
        None if summary.alert.is_none() => eprintln!("no alert raised"),
        None => {}
    }
    Ok(summary.exit_code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Keep usage errors apart from the divergence exit code (2).
            return ExitCode::from(if e.use_stderr() {
                EXIT_FAILURE as u8
            } else {
                0
            });
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train_cmd(a),
        Command::Enhance(a) => enhance_cmd(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Probe(a) => probe_cmd(a),
        Command::E2e(a) => e2e_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
