//! Command-line interface.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command as Process, Stdio};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use rbvsr_core::flow::{estimate_flow, FlowMap};
use rbvsr_core::metrics::{temporal_profile, MetricReport};
use rbvsr_core::pipeline::{neighbor_index, window_clip, Clip, DatasetSplit};
use rbvsr_core::trainer::AblationMode;
use rbvsr_core::Error as CoreError;
use serde_json::{json, Value};

use crate::checkpoint::load_checkpoint;
use crate::config::{parse_override, Profile, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{ablation_report, evaluate_clip, evaluate_dirs, Bicubic, SrModel};
use crate::extract::{extract_frames, DECODER};
use crate::fit::{fit, LogRecord, LATEST, LOG_FILE};
use crate::frames::{frame_file_name, read_clip_dir, write_frame};
use crate::prepare::{load_windows, prepare, read_split, write_toy_corpus, PreparedClip};
use crate::threads::with_pool;

pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Parser, Debug)]
#[command(name = "rbvsr", version, about = "Recurrent back-projection video super-resolution")]
pub struct Cli {
    /// JSON config file (flat dotted keys or nested objects).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Model size preset: full or tiny.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Override one config key, e.g. --set train.learning_rate=1e-3.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a procedural corpus of moving textures as frame directories.
    Toy(ToyArgs),
    /// Build LR/HR pairs, optical flows and the split manifest.
    Prepare(PrepareArgs),
    /// Train the generator (and discriminator) on the train split.
    Train(TrainArgs),
    /// Super-resolve a directory of LR frames or a video.
    Upscale(UpscaleArgs),
    /// Score SR frames against HR frames.
    Evaluate(EvaluateArgs),
    /// Train and score every loss configuration with a shared seed.
    Ablate(AblateArgs),
    /// Render the temporal profile of one row across a frame sequence.
    Profile(ProfileArgs),
    /// Print the effective configuration.
    ShowConfig,
}

#[derive(Args, Debug)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    clips: usize,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    /// HR frame side in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PathArgs {
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    prepared_root: Option<PathBuf>,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[command(flatten)]
    paths: PathArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    paths: PathArgs,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Loss configuration: l1_only, mse_only, adv, adv_mse, adv_mse_perc, full.
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from this checkpoint.
    #[arg(long, value_name = "CHECKPOINT")]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct UpscaleArgs {
    /// Directory of LR frames or a video file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory for the SR frames.
    #[arg(long)]
    out: PathBuf,
    /// Skip reassembling a video when the input was a video.
    #[arg(long)]
    no_video: bool,
    #[arg(long, default_value_t = 25)]
    fps: u32,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    paths: PathArgs,
    /// Directory of SR frames; pair with --hr.
    #[arg(long, requires = "hr")]
    sr: Option<PathBuf>,
    /// Directory of HR frames; pair with --sr.
    #[arg(long, requires = "sr")]
    hr: Option<PathBuf>,
    /// Score a trained generator on prepared clips.
    #[arg(long, conflicts_with_all = ["sr", "bicubic"])]
    checkpoint: Option<PathBuf>,
    /// Score the bicubic baseline on prepared clips.
    #[arg(long, conflicts_with = "sr")]
    bicubic: bool,
    /// Prepared clip to score (repeatable); default: the test split.
    #[arg(long)]
    clip: Vec<String>,
    #[arg(long)]
    crop_border: Option<usize>,
    /// Print a text table instead of JSON.
    #[arg(long)]
    table: bool,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    paths: PathArgs,
    /// Comma-separated modes; default all six.
    #[arg(long, value_delimiter = ',')]
    modes: Vec<String>,
    /// Training steps per mode.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    table: bool,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    /// Directory of frames.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    row: usize,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
}

/// Parse `args`, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Overrides(BTreeMap<String, Value>);

impl Overrides {
    fn new(cli: &Cli) -> Result<Self> {
        let mut map = BTreeMap::new();
        for s in &cli.set {
            let (k, v) = parse_override(s)?;
            map.insert(k, v);
        }
        Ok(Self(map))
    }

    fn put(&mut self, key: &str, value: Option<impl serde::Serialize>) -> Result<()> {
        if let Some(v) = value {
            self.0.insert(key.to_string(), serde_json::to_value(v)?);
        }
        Ok(())
    }

    fn paths(&mut self, p: &PathArgs) -> Result<()> {
        self.put("paths.data_root", p.data_root.as_ref())?;
        self.put("paths.prepared_root", p.prepared_root.as_ref())?;
        self.put("paths.checkpoint_dir", p.checkpoint_dir.as_ref())?;
        self.put("paths.out_dir", p.out_dir.as_ref())
    }
}

fn parse_mode(s: &str) -> Result<AblationMode> {
    AblationMode::parse(s.trim())
        .ok_or_else(|| CoreError::InvalidConfig(format!("unknown ablation mode {s:?}")).into())
}

fn resolve(cli: &Cli, overrides: &Overrides) -> Result<RunConfig> {
    let profile = match &cli.profile {
        Some(p) => Some(Profile::parse(p).ok_or_else(|| CoreError::InvalidConfig(format!("unknown profile {p:?}")))?),
        None => None,
    };
    let cfg = RunConfig::resolve(cli.config.as_deref(), profile, &overrides.0)?;
    eprintln!("effective config:\n{}", cfg.to_flat_json());
    Ok(cfg)
}

fn to_json(v: &impl serde::Serialize) -> Result<String> {
    Ok(format!("{}\n", serde_json::to_string_pretty(v)?))
}

fn execute(cli: Cli) -> Result<String> {
    let mut ov = Overrides::new(&cli)?;
    match &cli.command {
        Command::Toy(a) => {
            let written = write_toy_corpus(&a.out, a.seed, a.clips, a.frames, a.size)?;
            to_json(&json!({ "root": a.out, "clips": a.clips, "files_written": written }))
        }
        Command::Prepare(a) => {
            ov.paths(&a.paths)?;
            let cfg = resolve(&cli, &ov)?;
            to_json(&prepare(&cfg)?)
        }
        Command::Train(a) => {
            ov.paths(&a.paths)?;
            ov.put("train.max_steps", a.max_steps)?;
            ov.put("train.seed", a.seed)?;
            ov.put("train.ablation_mode", a.ablation.as_deref().map(parse_mode).transpose()?)?;
            let cfg = resolve(&cli, &ov)?;
            train(&cfg, a.resume.as_deref())
        }
        Command::Upscale(a) => upscale(&cli, &ov, a),
        Command::Evaluate(a) => {
            ov.paths(&a.paths)?;
            ov.put("data.crop_border", a.crop_border)?;
            evaluate(&cli, &ov, a)
        }
        Command::Ablate(a) => {
            ov.paths(&a.paths)?;
            ov.put("train.max_steps", a.steps)?;
            ov.put("train.seed", a.seed)?;
            let cfg = resolve(&cli, &ov)?;
            ablate(&cfg, a)
        }
        Command::Profile(a) => {
            let clip = read_clip_dir(&a.frames, "profile")?;
            let img = temporal_profile(clip.frames(), a.row)?;
            if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(Error::io(dir))?;
            }
            write_frame(&a.out, &img)?;
            to_json(&json!({ "out": a.out, "height": img.height(), "width": img.width() }))
        }
        Command::ShowConfig => Ok(format!("{}\n", resolve(&cli, &ov)?.to_flat_json())),
    }
}

fn load_split(cfg: &RunConfig) -> Result<DatasetSplit> {
    read_split(&cfg.paths.split_manifest())
}

fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<String> {
    let split = load_split(cfg)?;
    let windows = load_windows(cfg, &split.train)?;
    let dir = &cfg.paths.checkpoint_dir;
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let cfg_path = dir.join(RUN_CONFIG_FILE);
    fs::write(&cfg_path, format!("{}\n", cfg.to_flat_json())).map_err(Error::io(&cfg_path))?;
    let out = fit(cfg, &windows, Some(dir), resume)?;
    let last = out.reports.last().map(|r| {
        let b = r.breakdown;
        json!({ "step": r.step, "total": b.total, "mse": b.mse, "perceptual": b.perceptual,
                "adversarial": b.adversarial, "tv": b.tv, "l1": b.l1, "d_loss": r.d_loss })
    });
    to_json(&json!({
        "steps": out.state.step,
        "train_windows": windows.len(),
        "checkpoint": dir.join(LATEST),
        "log": dir.join(LOG_FILE),
        "last": last,
    }))
}

/// Flows of every window of `lr`, estimated on the fly.
fn flows_for(lr: &Clip, n: usize, cfg: &RunConfig) -> Result<Vec<Vec<FlowMap>>> {
    let frames = lr.frames();
    with_pool(|| {
        (0..frames.len())
            .into_par_iter()
            .map(|t| {
                (1..=n)
                    .map(|k| Ok(estimate_flow(&frames[neighbor_index(t, k)], &frames[t], &cfg.flow)?))
                    .collect::<Result<Vec<_>>>()
            })
            .collect()
    })
}

fn upscale(cli: &Cli, ov: &Overrides, a: &UpscaleArgs) -> Result<String> {
    let cfg = resolve(cli, ov)?;
    let bundle = load_checkpoint(&a.checkpoint)?;
    let generator = bundle.generator()?;
    let gcfg = &bundle.header.generator;
    fs::create_dir_all(&a.out).map_err(Error::io(&a.out))?;
    let is_video = a.input.is_file();
    let lr = if is_video {
        let scratch = a.out.join(".input");
        let clip = extract_frames(&a.input, &scratch);
        let _ = fs::remove_dir_all(&scratch);
        clip?
    } else {
        read_clip_dir(&a.input, "input")?
    };
    let flows = flows_for(&lr, gcfg.n_neighbors, &cfg)?;
    let sr = with_pool(|| {
        (0..lr.len())
            .into_par_iter()
            .map(|t| {
                let w = window_clip(&lr, t, gcfg.n_neighbors, flows[t].clone(), None)?;
                let f = generator.upscale(&w)?;
                let (h, wd) = lr.frames()[t].dims();
                if f.dims() != (h * gcfg.scale, wd * gcfg.scale) {
                    return Err(CoreError::DimensionMismatch(format!(
                        "frame {t}: output {:?} is not {}x the input {:?}",
                        f.dims(),
                        gcfg.scale,
                        (h, wd)
                    ))
                    .into());
                }
                Ok(f)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (i, f) in sr.iter().enumerate() {
        write_frame(&a.out.join(frame_file_name(i)), f)?;
    }
    let video = if is_video && !a.no_video {
        let stem = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("output");
        let path = a.out.join(format!("{stem}_sr.mkv"));
        encode_video(&a.out, &path, a.fps)?;
        Some(path)
    } else {
        None
    };
    let (h, w) = sr[0].dims();
    to_json(&json!({ "frames": sr.len(), "height": h, "width": w, "out": a.out, "video": video }))
}

/// Reassemble `%06d.png` frames into a lossless FFV1 video.
fn encode_video(frames_dir: &Path, out: &Path, fps: u32) -> Result<()> {
    let result = Process::new(DECODER)
        .args(["-v", "error", "-nostdin", "-y", "-framerate", &fps.to_string(), "-i"])
        .arg(frames_dir.join("%06d.png"))
        .args(["-c:v", "ffv1"])
        .arg(out)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .output();
    match result {
        Err(e) => Err(Error::External(format!("cannot run {DECODER} ({e}); use --no-video"))),
        Ok(o) if !o.status.success() => Err(Error::External(format!(
            "{DECODER} failed: {}",
            String::from_utf8_lossy(&o.stderr).trim()
        ))),
        Ok(_) => Ok(()),
    }
}

/// The clips to score: explicit ids, else the test split, else val, else all.
fn eval_clips(cfg: &RunConfig, explicit: &[String]) -> Result<Vec<String>> {
    if !explicit.is_empty() {
        return Ok(explicit.to_vec());
    }
    let s = load_split(cfg)?;
    Ok(if !s.test.is_empty() {
        s.test
    } else if !s.val.is_empty() {
        s.val
    } else {
        s.train
    })
}

fn evaluate(cli: &Cli, ov: &Overrides, a: &EvaluateArgs) -> Result<String> {
    let cfg = resolve(cli, ov)?;
    let border = cfg.data.crop_border;
    let reports: Vec<MetricReport> = if let (Some(sr), Some(hr)) = (&a.sr, &a.hr) {
        let id = hr.file_name().and_then(|s| s.to_str()).unwrap_or("clip").to_string();
        vec![evaluate_dirs(sr, hr, &id, border)?]
    } else {
        let (model, n): (Box<dyn SrModel>, usize) = match &a.checkpoint {
            Some(path) => {
                let bundle = load_checkpoint(path)?;
                let n = bundle.header.generator.n_neighbors;
                if n != cfg.generator.n_neighbors {
                    return Err(CoreError::ConfigMismatch(format!(
                        "checkpoint uses {n} neighbors, prepared flows {}",
                        cfg.generator.n_neighbors
                    ))
                    .into());
                }
                (Box::new(bundle.generator()?), n)
            }
            None if a.bicubic => (
                Box::new(Bicubic {
                    scale: cfg.generator.scale as u32,
                }),
                cfg.generator.n_neighbors,
            ),
            None => {
                return Err(CoreError::InvalidConfig(
                    "evaluate needs --sr/--hr, --checkpoint or --bicubic".into(),
                )
                .into())
            }
        };
        eval_clips(&cfg, &a.clip)?
            .iter()
            .map(|id| {
                let c = PreparedClip::load(&cfg, id)?;
                Ok(evaluate_clip(model.as_ref(), &c.lr, &c.hr, &c.flows, n, border)?.0)
            })
            .collect::<Result<_>>()?
    };
    if a.table {
        Ok(report_table(&reports))
    } else if reports.len() == 1 {
        to_json(&reports[0])
    } else {
        to_json(&reports)
    }
}

fn fmt_psnr(p: Option<f64>) -> String {
    p.map_or("inf".to_string(), |p| format!("{p:.3}"))
}

fn report_table(reports: &[MetricReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(s, "clip {}", r.clip_id);
        let _ = writeln!(s, "{:>6} {:>10} {:>8}", "frame", "PSNR(dB)", "SSIM");
        for (i, f) in r.per_frame.iter().enumerate() {
            let _ = writeln!(s, "{i:>6} {:>10} {:>8.4}", fmt_psnr(f.psnr_db), f.ssim);
        }
        let _ = writeln!(s, "{:>6} {:>10} {:>8.4}\n", "mean", fmt_psnr(r.mean_psnr_db), r.mean_ssim);
    }
    s
}

fn ablate(cfg: &RunConfig, a: &AblateArgs) -> Result<String> {
    let modes = if a.modes.is_empty() {
        AblationMode::ALL.to_vec()
    } else {
        a.modes.iter().map(|m| parse_mode(m)).collect::<Result<Vec<_>>>()?
    };
    let split = load_split(cfg)?;
    let train = load_windows(cfg, &split.train)?;
    let eval_id = eval_clips(cfg, &[])?
        .into_iter()
        .next()
        .ok_or(CoreError::EmptyCorpus)?;
    let eval = PreparedClip::load(cfg, &eval_id)?;
    let root = cfg.paths.out_dir.join("ablation");
    let report = ablation_report(cfg, &modes, &train, (&eval.lr, &eval.hr, &eval.flows), Some(&root))?;
    let path = root.join("report.json");
    fs::write(&path, to_json(&report)?).map_err(Error::io(&path))?;
    if a.table {
        Ok(report.to_table())
    } else {
        to_json(&report)
    }
}

/// Log records of a training run with the wall-clock field zeroed, for
/// comparing two runs.
pub fn log_without_timing(records: &[LogRecord]) -> Vec<LogRecord> {
    records
        .iter()
        .cloned()
        .map(|mut r| {
            r.wall_ms = 0;
            r
        })
        .collect()
}
