//! Command-line front end.
//!
//! Subcommands wire the pipeline end to end: `synth` renders a dataset,
//! `train` fits a model, `render` draws a view at a fractional LOD,
//! `encode`/`decode` move models through the progressive stream format,
//! `stream-sim` replays byte arrival at a fixed bandwidth, and `eval` emits
//! quality and transition CSVs.
//!
//! Exit codes: 0 success; 2 for usage problems (unknown flags, missing
//! files, malformed configs, out-of-range arguments); 1 for runtime
//! failures. Config precedence for `train`: explicit flags override the
//! `--config` file, which overrides the defaults. Every artifact directory
//! receives a `manifest.json` snapshot sufficient to reproduce the run.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::codec::{self, StreamMode};
use crate::dataset::{load_dataset, write_synthetic_dataset};
use crate::error::{Error, Result};
use crate::lod::{self, ArchConfig};
use crate::metrics;
use crate::mlp::{render, VariableWidthMlp};
use crate::synth::{generate_rig, SceneSpec};
use crate::trainer::{self, LodSampling, TrainConfig};

/// Snapshot of everything a run needs in order to be replayed exactly.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default)]
    pub tool_version: String,
    #[serde(default)]
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ArchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalParams>,
}

impl RunManifest {
    fn new(command: &str) -> RunManifest {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            ..RunManifest::default()
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthParams {
    pub azimuth: usize,
    pub elevation: usize,
    pub radius: f64,
    pub fov_deg: f64,
    pub resolution: [u32; 2],
    pub scene: SceneSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalParams {
    pub split: String,
    pub mode: String,
    pub lods: Vec<f64>,
    pub radial_split: f64,
}

#[derive(Parser)]
#[command(name = "clfn", version, about = "Light field networks with continuous levels of detail")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic multi-camera dataset.
    Synth(SynthArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Render one view at a fractional level of detail.
    Render(RenderArgs),
    /// Re-encode a model stream, optionally truncated to a width.
    Encode(EncodeArgs),
    /// Decode a stream prefix into a standalone model file.
    Decode(DecodeArgs),
    /// Replay stream bytes at a fixed bandwidth and tabulate availability.
    StreamSim(StreamSimArgs),
    /// Evaluate quality per LOD and flicker per transition.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Camera columns around the scene.
    #[arg(long, default_value_t = 40)]
    azimuth: usize,
    /// Camera rows in the elevation band.
    #[arg(long, default_value_t = 6)]
    elevation: usize,
    /// Rig radius in world units.
    #[arg(long, default_value_t = 3.0)]
    radius: f64,
    /// Vertical field of view in degrees.
    #[arg(long, default_value_t = 45.0)]
    fov: f64,
    /// Image resolution as WxH.
    #[arg(long, default_value = "256x256", value_parser = parse_resolution)]
    resolution: (u32, u32),
    /// Scene description JSON (defaults to the built-in demo scene).
    #[arg(long)]
    scene: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (from `synth` or following the same layout).
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for the model, checkpoints, and logs.
    #[arg(long)]
    out: PathBuf,
    /// JSON config with optional `arch` and `train` sections; a previous
    /// run's manifest.json works as-is.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    lambda_f: Option<f64>,
    #[arg(long)]
    lambda_s: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Draw low LODs only from integer widths.
    #[arg(long)]
    integer_lods: bool,
    #[arg(long)]
    min_width: Option<usize>,
    #[arg(long)]
    max_width: Option<usize>,
    /// Total layer count (hidden plus output).
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Args)]
struct RenderArgs {
    /// Model stream file.
    #[arg(long)]
    model: PathBuf,
    /// Fractional level of detail.
    #[arg(long)]
    lod: f64,
    /// Output PNG path.
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory supplying the camera.
    #[arg(long)]
    dataset: PathBuf,
    /// Camera index within the dataset.
    #[arg(long, default_value_t = 0)]
    view: usize,
    /// Override the output resolution (default: camera resolution scaled by
    /// the LOD's target scale).
    #[arg(long, value_parser = parse_resolution)]
    resolution: Option<(u32, u32)>,
}

#[derive(Args)]
struct EncodeArgs {
    /// Input model stream.
    #[arg(long)]
    model: PathBuf,
    /// Output stream path.
    #[arg(long)]
    out: PathBuf,
    /// Keep only segments up to this width.
    #[arg(long)]
    up_to_width: Option<u32>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Input stream (possibly a truncated prefix).
    #[arg(long)]
    stream: PathBuf,
    /// Output model path.
    #[arg(long)]
    out: PathBuf,
    /// Decode through this width (default: everything present).
    #[arg(long)]
    up_to_width: Option<u32>,
    /// Print the segment table.
    #[arg(long)]
    info: bool,
}

#[derive(Args)]
struct StreamSimArgs {
    /// Input stream file.
    #[arg(long)]
    stream: PathBuf,
    /// Bandwidth in bytes per second.
    #[arg(long)]
    bandwidth: f64,
    /// `continuous` or `discrete:N`.
    #[arg(long, default_value = "continuous", value_parser = parse_mode)]
    mode: StreamMode,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Model stream file.
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for quality.csv and transitions.csv.
    #[arg(long)]
    out: PathBuf,
    /// Which split to evaluate: test, val, or train.
    #[arg(long, default_value = "test")]
    split: String,
    /// Transition mode: `continuous` or `discrete:N`.
    #[arg(long, default_value = "continuous", value_parser = parse_mode)]
    mode: StreamMode,
    /// Comma-separated LODs for the quality table (default: the LODs of the
    /// quarter-width sub-networks).
    #[arg(long, value_delimiter = ',')]
    lods: Option<Vec<f64>>,
    /// Low/high frequency boundary for the flicker metric, as a fraction of
    /// Nyquist.
    #[arg(long, default_value_t = metrics::DEFAULT_RADIAL_SPLIT)]
    radial_split: f64,
}

fn parse_resolution(s: &str) -> std::result::Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let w = w.parse().map_err(|_| format!("bad width '{w}'"))?;
    let h = h.parse().map_err(|_| format!("bad height '{h}'"))?;
    if w == 0 || h == 0 {
        return Err("resolution components must be >= 1".into());
    }
    Ok((w, h))
}

fn parse_mode(s: &str) -> std::result::Result<StreamMode, String> {
    if s == "continuous" {
        return Ok(StreamMode::Continuous);
    }
    if let Some(n) = s.strip_prefix("discrete:") {
        let n: u32 = n.parse().map_err(|_| format!("bad level count '{n}'"))?;
        return Ok(StreamMode::Discrete(n));
    }
    Err(format!("expected 'continuous' or 'discrete:N', got '{s}'"))
}

enum CliError {
    Usage(String),
    Runtime(Error),
}

type CliResult = std::result::Result<(), CliError>;

/// Classifies a fallible step as a usage problem (exit 2).
fn usage<T>(r: Result<T>) -> std::result::Result<T, CliError> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

/// Classifies a fallible step as a runtime failure (exit 1).
fn runtime<T>(r: Result<T>) -> std::result::Result<T, CliError> {
    r.map_err(CliError::Runtime)
}

fn require_file(path: &Path) -> std::result::Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("no such file: {}", path.display())));
    }
    Ok(())
}

fn require_dir(path: &Path) -> std::result::Result<(), CliError> {
    if !path.is_dir() {
        return Err(CliError::Usage(format!(
            "no such directory: {}",
            path.display()
        )));
    }
    Ok(())
}

fn load_model(path: &Path) -> std::result::Result<VariableWidthMlp<f32>, CliError> {
    require_file(path)?;
    let bytes = usage(fs::read(path).map_err(Error::from))?;
    usage(codec::decode(&bytes))
}

/// Entry point for the `clfn` binary.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Testable entry point.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Render(args) => cmd_render(args),
        Cmd::Encode(args) => cmd_encode(args),
        Cmd::Decode(args) => cmd_decode(args),
        Cmd::StreamSim(args) => cmd_stream_sim(args),
        Cmd::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    let scene = match &args.scene {
        Some(path) => {
            require_file(path)?;
            let text = usage(fs::read_to_string(path).map_err(Error::from))?;
            let scene: SceneSpec =
                usage(serde_json::from_str(&text).map_err(Error::from))?;
            usage(scene.validate())?;
            scene
        }
        None => SceneSpec::demo(),
    };
    let rig = usage(generate_rig(
        args.azimuth,
        args.elevation,
        args.radius,
        Vector3::zeros(),
        args.resolution,
        args.fov,
    ))?;
    runtime(fs::create_dir_all(&args.out).map_err(Error::from))?;
    runtime(write_synthetic_dataset(
        &args.out,
        &scene,
        &rig,
        args.resolution,
    ))?;
    let mut manifest = RunManifest::new("synth");
    manifest.synth = Some(SynthParams {
        azimuth: args.azimuth,
        elevation: args.elevation,
        radius: args.radius,
        fov_deg: args.fov,
        resolution: [args.resolution.0, args.resolution.1],
        scene,
    });
    runtime(manifest.write(&args.out))?;
    println!(
        "wrote {} views to {}",
        rig.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult {
    require_dir(&args.dataset)?;
    // Defaults, then config file, then explicit flags.
    let (mut arch, mut cfg) = (ArchConfig::default(), TrainConfig::default());
    if let Some(path) = &args.config {
        require_file(path)?;
        let text = usage(fs::read_to_string(path).map_err(Error::from))?;
        let manifest: RunManifest = usage(serde_json::from_str(&text).map_err(Error::from))?;
        if let Some(a) = manifest.arch {
            arch = a;
        }
        if let Some(t) = manifest.train {
            cfg = t;
        }
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.lr_decay {
        cfg.lr_decay = v;
    }
    if let Some(v) = args.lambda_f {
        cfg.lambda_f = v;
    }
    if let Some(v) = args.lambda_s {
        cfg.lambda_s = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.integer_lods {
        cfg.lod_sampling = LodSampling::IntegerUniform;
    }
    if let Some(v) = args.min_width {
        arch.min_width = v;
    }
    if let Some(v) = args.max_width {
        arch.max_width = v;
    }
    if let Some(v) = args.layers {
        arch.layers = v;
    }
    usage(arch.validate())?;
    usage(cfg.validate(&arch))?;

    let ds = usage(load_dataset(&args.dataset))?;
    let views = usage(ds.training_views())?;
    runtime(fs::create_dir_all(&args.out).map_err(Error::from))?;

    let mut manifest = RunManifest::new("train");
    manifest.seed = cfg.seed;
    manifest.dataset = Some(args.dataset.clone());
    manifest.arch = Some(arch);
    manifest.train = Some(cfg.clone());
    runtime(manifest.write(&args.out))?;

    let mut model = runtime(VariableWidthMlp::<f32>::init(&arch, cfg.seed))?;
    let log = runtime(trainer::train(&views, &mut model, &cfg, Some(&args.out)))?;
    let stream = codec::encode(&model);
    runtime(fs::write(args.out.join("model.clfn"), stream.to_bytes()).map_err(Error::from))?;
    let last = log.steps.last().map(|s| s.total).unwrap_or(f64::NAN);
    println!(
        "trained {} epochs ({} steps), final loss {last:.6}; model at {}",
        cfg.epochs,
        log.steps.len(),
        args.out.join("model.clfn").display()
    );
    Ok(())
}

fn cmd_render(args: RenderArgs) -> CliResult {
    let model = load_model(&args.model)?;
    require_dir(&args.dataset)?;
    let ds = usage(load_dataset(&args.dataset))?;
    if args.view >= ds.cameras.len() {
        return Err(CliError::Usage(format!(
            "view index {} out of range (dataset has {} cameras)",
            args.view,
            ds.cameras.len()
        )));
    }
    let spec = usage(lod::LodSpec::resolve(model.arch(), args.lod))?;
    let camera = &ds.cameras[args.view];
    let resolution = args.resolution.unwrap_or_else(|| {
        let w = (camera.resolution.0 as f64 * spec.scale).round().max(1.0) as u32;
        let h = (camera.resolution.1 as f64 * spec.scale).round().max(1.0) as u32;
        (w, h)
    });
    let img = runtime(render(&model, camera, args.lod, resolution))?;
    runtime(img.save_png(&args.out))?;
    println!(
        "rendered view {} at lod {} (width {}, scale {:.5}) to {} ({}x{})",
        args.view,
        args.lod,
        spec.active_width,
        spec.scale,
        args.out.display(),
        resolution.0,
        resolution.1
    );
    Ok(())
}

fn cmd_encode(args: EncodeArgs) -> CliResult {
    require_file(&args.model)?;
    let bytes = usage(fs::read(&args.model).map_err(Error::from))?;
    let model = match args.up_to_width {
        Some(w) => usage(codec::decode_prefix(&bytes, w))?,
        None => usage(codec::ProgressiveStream::from_bytes_available(&bytes).and_then(|s| s.to_model()))?,
    };
    let stream = codec::encode(&model);
    runtime(fs::write(&args.out, stream.to_bytes()).map_err(Error::from))?;
    println!(
        "encoded widths {}..={} ({} payload bytes) to {}",
        stream.base.width,
        stream.top_width(),
        stream.payload_bytes(),
        args.out.display()
    );
    Ok(())
}

fn cmd_decode(args: DecodeArgs) -> CliResult {
    require_file(&args.stream)?;
    let bytes = usage(fs::read(&args.stream).map_err(Error::from))?;
    let stream = match args.up_to_width {
        Some(w) => usage(codec::ProgressiveStream::from_bytes_prefix(&bytes, w))?,
        None => usage(codec::ProgressiveStream::from_bytes_available(&bytes))?,
    };
    if args.info {
        println!("arch: {:?}", stream.arch);
        println!("width,payload_bytes");
        for seg in stream.segments() {
            println!("{},{}", seg.width, seg.payload_bytes());
        }
    }
    let model = usage(stream.to_model())?;
    runtime(fs::write(&args.out, codec::encode(&model).to_bytes()).map_err(Error::from))?;
    println!(
        "decoded model usable through width {} to {}",
        model.available_width(),
        args.out.display()
    );
    Ok(())
}

fn cmd_stream_sim(args: StreamSimArgs) -> CliResult {
    require_file(&args.stream)?;
    if !(args.bandwidth > 0.0) {
        return Err(CliError::Usage("bandwidth must be positive".into()));
    }
    let bytes = usage(fs::read(&args.stream).map_err(Error::from))?;
    let stream = usage(codec::ProgressiveStream::from_bytes_available(&bytes))?;
    let events = usage(codec::stream_simulate(&stream, args.bandwidth, args.mode))?;
    let mut csv = String::from("time_s,width,bytes_received,delta_payload_bytes\n");
    for e in &events {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            e.time_s, e.width, e.bytes_received, e.delta_payload_bytes
        ));
    }
    runtime(fs::write(&args.out, csv).map_err(Error::from))?;
    println!(
        "simulated {} events at {} B/s to {}",
        events.len(),
        args.bandwidth,
        args.out.display()
    );
    Ok(())
}

/// Widths of the quarter-fraction sub-networks (the conventional quality
/// checkpoints), clamped to the valid range.
fn quarter_width_lods(arch: &ArchConfig) -> Vec<f64> {
    let mut lods: Vec<f64> = (1..=4)
        .map(|k| {
            let w = (arch.max_width * k / 4).max(arch.min_width);
            lod::lod_for_width(arch, w).unwrap()
        })
        .collect();
    lods.dedup();
    lods
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let model = load_model(&args.model)?;
    require_dir(&args.dataset)?;
    let ds = usage(load_dataset(&args.dataset))?;
    let arch = *model.arch();
    let indices = match args.split.as_str() {
        "train" => ds.split.train.clone(),
        "val" => ds.split.val.clone(),
        "test" => ds.split.test.clone(),
        other => {
            return Err(CliError::Usage(format!(
                "unknown split '{other}' (expected train, val, or test)"
            )))
        }
    };
    if indices.is_empty() {
        return Err(CliError::Usage(format!(
            "split '{}' has no views in this dataset",
            args.split
        )));
    }
    let views = usage(ds.views_for(&indices))?;
    let lods = args.lods.clone().unwrap_or_else(|| quarter_width_lods(&arch));
    for &l in &lods {
        usage(lod::LodSpec::resolve(&arch, l))?;
    }
    runtime(fs::create_dir_all(&args.out).map_err(Error::from))?;

    // Quality table: render at the LOD's scale and compare against the
    // box-downsampled ground truth.
    let mut quality = String::from("lod,psnr,ssim\n");
    for &l in &lods {
        let spec = lod::LodSpec::resolve(&arch, l).expect("validated above");
        let mut psnr_acc = 0.0;
        let mut ssim_acc = 0.0;
        let mut ssim_count = 0usize;
        for view in &views {
            let ow = ((view.image.width as f64) * spec.scale).round().max(1.0) as usize;
            let oh = ((view.image.height as f64) * spec.scale).round().max(1.0) as usize;
            let rendered = runtime(render(
                &model,
                &view.camera,
                l,
                (ow as u32, oh as u32),
            ))?;
            let reference = runtime(crate::sat::box_downsample(&view.sat, (ow, oh)))?;
            psnr_acc += runtime(metrics::psnr(&rendered, &reference, 1.0))?;
            if let Ok(s) = metrics::ssim(&rendered, &reference) {
                ssim_acc += s;
                ssim_count += 1;
            }
        }
        let n = views.len() as f64;
        let mean_ssim = if ssim_count > 0 {
            ssim_acc / ssim_count as f64
        } else {
            f64::NAN
        };
        quality.push_str(&format!("{},{},{}\n", l, psnr_acc / n, mean_ssim));
    }
    runtime(fs::write(args.out.join("quality.csv"), quality).map_err(Error::from))?;

    // Transition table: flicker between consecutive renderable widths at
    // full resolution, averaged over views, plus the payload bytes each
    // transition downloads.
    let widths: Vec<u32> = match args.mode {
        StreamMode::Continuous => (arch.min_width as u32..=arch.max_width as u32).collect(),
        StreamMode::Discrete(n) => usage(codec::discrete_widths(&arch, n))?,
    };
    let mut transitions = String::from("transition,flicker,delta_bytes\n");
    for pair in widths.windows(2) {
        let (w_lo, w_hi) = (pair[0], pair[1]);
        let lod_lo = lod::lod_for_width(&arch, w_lo as usize).expect("valid width");
        let lod_hi = lod::lod_for_width(&arch, w_hi as usize).expect("valid width");
        let mut flicker_acc = 0.0;
        for view in &views {
            let res = view.camera.resolution;
            let frame_lo = runtime(render(&model, &view.camera, lod_lo, res))?;
            let frame_hi = runtime(render(&model, &view.camera, lod_hi, res))?;
            let reference = vec![view.image.clone(), view.image.clone()];
            let f = runtime(metrics::flicker(
                &[frame_lo, frame_hi],
                &reference,
                args.radial_split,
            ))?;
            flicker_acc += f[0];
        }
        let delta_bytes = runtime(lod::model_bytes(&arch, w_hi as usize))?
            - runtime(lod::model_bytes(&arch, w_lo as usize))?;
        transitions.push_str(&format!(
            "{}->{},{},{}\n",
            w_lo,
            w_hi,
            flicker_acc / views.len() as f64,
            delta_bytes
        ));
    }
    runtime(fs::write(args.out.join("transitions.csv"), transitions).map_err(Error::from))?;

    let mut manifest = RunManifest::new("eval");
    manifest.dataset = Some(args.dataset.clone());
    manifest.arch = Some(arch);
    manifest.eval = Some(EvalParams {
        split: args.split.clone(),
        mode: match args.mode {
            StreamMode::Continuous => "continuous".to_string(),
            StreamMode::Discrete(n) => format!("discrete:{n}"),
        },
        lods,
        radial_split: args.radial_split,
    });
    runtime(manifest.write(&args.out))?;
    println!(
        "wrote quality.csv and transitions.csv ({} transitions) to {}",
        widths.len() - 1,
        args.out.display()
    );
    Ok(())
}
