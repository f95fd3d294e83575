//! Training driver: batching, optional patch crops, checkpoints and the
//! JSON-lines loss log.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbvsr_core::flow::FlowMap;
use rbvsr_core::pipeline::ClipWindow;
use rbvsr_core::trainer::{batch_indices, derive_seed, train_step, StepReport, TrainState};
use rbvsr_core::{Error as CoreError, Frame};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointBundle};
use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const LATEST: &str = "latest.isbc";

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub mse: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    pub tv: f64,
    pub l1: f64,
    pub total: f64,
    pub d_loss: Option<f64>,
    /// Loss terms switched on by the ablation mode.
    pub active: Vec<String>,
    pub wall_ms: u64,
}

impl LogRecord {
    fn new(r: &StepReport, active: &[&str], wall_ms: u64) -> Self {
        let b = r.breakdown;
        Self {
            step: r.step,
            mse: b.mse,
            perceptual: b.perceptual,
            adversarial: b.adversarial,
            tv: b.tv,
            l1: b.l1,
            total: b.total,
            d_loss: r.d_loss,
            active: active.iter().map(|s| s.to_string()).collect(),
            wall_ms,
        }
    }
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step_{step:06}.isbc"))
}

pub fn new_state(cfg: &RunConfig) -> Result<TrainState> {
    Ok(TrainState::new(
        cfg.generator.clone(),
        cfg.discriminator.clone(),
        cfg.extractor.build()?,
        cfg.train.clone(),
    )?)
}

fn crop_flow(f: &FlowMap, top: usize, left: usize, size: usize) -> Result<FlowMap> {
    let (_, w) = f.dims();
    let pick = |a: &[f32]| -> Vec<f32> {
        (top..top + size)
            .flat_map(|y| a[y * w + left..y * w + left + size].iter().copied())
            .collect()
    };
    Ok(FlowMap::new(size, size, pick(f.u()), pick(f.v()))?)
}

/// Crop a window to a `size × size` LR patch (and the matching HR patch).
pub fn crop_window(w: &ClipWindow, size: usize, scale: usize, rng: &mut ChaCha8Rng) -> Result<ClipWindow> {
    let (h, wd) = w.target_lr.dims();
    if size > h || size > wd {
        return Err(CoreError::InvalidConfig(format!("patch {size} exceeds {h}x{wd} frames")).into());
    }
    let top = rng.random_range(0..=h - size);
    let left = rng.random_range(0..=wd - size);
    let crop = |f: &Frame| f.crop(top, left, size, size);
    Ok(ClipWindow {
        target_lr: crop(&w.target_lr)?,
        neighbors_lr: w.neighbors_lr.iter().map(crop).collect::<rbvsr_core::Result<_>>()?,
        flows: w.flows.iter().map(|f| crop_flow(f, top, left, size)).collect::<Result<_>>()?,
        target_hr: match &w.target_hr {
            Some(hr) => Some(hr.crop(top * scale, left * scale, size * scale, size * scale)?),
            None => None,
        },
    })
}

/// The batch for `step` (0-based): windows drawn by seeded epoch
/// permutations, cropped when `patch_size` is set.
pub fn make_batch(cfg: &RunConfig, windows: &[ClipWindow], step: u64) -> Result<Vec<ClipWindow>> {
    let t = &cfg.train;
    let picks = batch_indices(t.seed, step, t.batch_size, windows.len());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(t.seed, 0x2000_0000 + step));
    picks
        .into_iter()
        .map(|i| match t.patch_size {
            Some(p) => crop_window(&windows[i], p, cfg.generator.scale, &mut rng),
            None => Ok(windows[i].clone()),
        })
        .collect()
}

pub struct FitOutcome {
    pub state: TrainState,
    pub bundle: CheckpointBundle,
    pub reports: Vec<StepReport>,
}

/// Keep only log lines of steps `<= step`.
fn truncate_log(path: &Path, step: u64) -> Result<()> {
    let Ok(text) = fs::read_to_string(path) else { return Ok(()) };
    let kept: String = text
        .lines()
        .filter(|l| serde_json::from_str::<LogRecord>(l).is_ok_and(|r| r.step <= step))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(path, kept).map_err(Error::io(path))
}

/// Train until `cfg.train.max_steps`. With `run_dir`, checkpoints go to
/// `step_%06d.isbc` every `checkpoint_every` steps and at the end (also
/// copied to `latest.isbc`) and every step is appended to
/// `train_log.jsonl`. With `resume`, training continues from that
/// checkpoint, dropping any later log lines.
pub fn fit(cfg: &RunConfig, windows: &[ClipWindow], run_dir: Option<&Path>, resume: Option<&Path>) -> Result<FitOutcome> {
    if windows.is_empty() {
        return Err(CoreError::EmptyCorpus.into());
    }
    let mut state = new_state(cfg)?;
    if let Some(path) = resume {
        load_checkpoint(path)?.load_into(&mut state)?;
    }
    let mut log = match run_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(Error::io(dir))?;
            let path = dir.join(LOG_FILE);
            if resume.is_some() {
                truncate_log(&path, state.step)?;
            } else {
                fs::write(&path, "").map_err(Error::io(&path))?;
            }
            Some(
                fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(Error::io(&path))?,
            )
        }
        None => None,
    };
    let save = |state: &TrainState| -> Result<CheckpointBundle> {
        let bundle = CheckpointBundle::from_state(state);
        if let Some(dir) = run_dir {
            save_checkpoint(&bundle, &checkpoint_path(dir, state.step))?;
            save_checkpoint(&bundle, &dir.join(LATEST))?;
        }
        Ok(bundle)
    };

    let active = cfg.train.ablation_mode.active_terms().names();
    let mut reports = Vec::new();
    let mut bundle = None;
    while state.step < cfg.train.max_steps {
        let start = Instant::now();
        let batch = make_batch(cfg, windows, state.step)?;
        let report = train_step(&mut state, &batch)?;
        if let Some(f) = log.as_mut() {
            let rec = LogRecord::new(&report, &active, start.elapsed().as_millis() as u64);
            let line = serde_json::to_string(&rec)?;
            writeln!(f, "{line}").map_err(Error::io(run_dir.unwrap().join(LOG_FILE)))?;
        }
        reports.push(report);
        let every = cfg.train.checkpoint_every;
        if state.step == cfg.train.max_steps {
            bundle = Some(save(&state)?);
        } else if every > 0 && state.step % every == 0 {
            save(&state)?;
        }
    }
    let bundle = match bundle {
        Some(b) => b,
        None => save(&state)?,
    };
    Ok(FitOutcome { state, bundle, reports })
}

/// Parse a training log.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
