//! Clip evaluation, the ablation report and image-file metrics.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use rbvsr_core::flow::FlowMap;
use rbvsr_core::generator::Generator;
use rbvsr_core::metrics::{FrameScore, MetricReport};
use rbvsr_core::pipeline::{window_clip, Clip, ClipWindow};
use rbvsr_core::resize::{bicubic_resize, Ratio};
use rbvsr_core::trainer::AblationMode;
use rbvsr_core::Frame;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;
use crate::fit::fit;
use crate::frames::read_clip_dir;
use crate::threads::with_pool;

/// Anything that maps a window to an SR frame.
pub trait SrModel: Sync {
    fn upscale(&self, window: &ClipWindow) -> Result<Frame>;
}

impl SrModel for Generator {
    fn upscale(&self, window: &ClipWindow) -> Result<Frame> {
        Ok(Generator::upscale(self, window)?)
    }
}

/// Bicubic upsampling of the target frame, the classical baseline.
pub struct Bicubic {
    pub scale: u32,
}

impl SrModel for Bicubic {
    fn upscale(&self, window: &ClipWindow) -> Result<Frame> {
        Ok(bicubic_resize(&window.target_lr, Ratio::new(self.scale, 1))?)
    }
}

fn crop_border(f: &Frame, border: usize) -> Result<Frame> {
    if border == 0 {
        return Ok(f.clone());
    }
    let (h, w) = f.dims();
    Ok(f.crop(border, border, h.saturating_sub(2 * border), w.saturating_sub(2 * border))?)
}

/// Score an SR frame against HR the way saved images would be scored:
/// both are clamped and quantized to 8 bits, then `border` pixels are
/// dropped from every side.
pub fn score_frame(sr: &Frame, hr: &Frame, border: usize) -> Result<FrameScore> {
    let sr = crop_border(&sr.quantized(), border)?;
    let hr = crop_border(&hr.quantized(), border)?;
    Ok(FrameScore::compute(&sr, &hr)?)
}

/// Upscale every frame of `lr_clip` and score it against `hr_clip`.
/// `flows[t]` holds the `n` flows of target `t`. Returns the report and
/// the clamped SR frames.
pub fn evaluate_clip(
    model: &dyn SrModel,
    lr_clip: &Clip,
    hr_clip: &Clip,
    flows: &[Vec<FlowMap>],
    n: usize,
    border: usize,
) -> Result<(MetricReport, Vec<Frame>)> {
    let results = with_pool(|| {
        (0..lr_clip.len())
            .into_par_iter()
            .map(|t| {
                let w = window_clip(lr_clip, t, n, flows[t].clone(), Some(hr_clip))?;
                let sr = model.upscale(&w)?;
                let score = score_frame(&sr, w.target_hr.as_ref().expect("window has HR"), border)?;
                Ok((score, sr))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let (scores, frames): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((MetricReport::from_scores(&lr_clip.clip_id, scores)?, frames))
}

/// Score two directories of frame files against each other.
pub fn evaluate_dirs(sr_dir: &Path, hr_dir: &Path, clip_id: &str, border: usize) -> Result<MetricReport> {
    let sr = read_clip_dir(sr_dir, clip_id)?;
    let hr = read_clip_dir(hr_dir, clip_id)?;
    if sr.len() != hr.len() {
        return Err(rbvsr_core::Error::DimensionMismatch(format!(
            "{} SR frames vs {} HR frames",
            sr.len(),
            hr.len()
        ))
        .into());
    }
    let scores = sr
        .frames()
        .iter()
        .zip(hr.frames())
        .map(|(s, h)| score_frame(s, h, border))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_scores(clip_id, scores)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub description: String,
    pub psnr_db: Option<f64>,
    pub ssim: f64,
    pub final_total_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub steps: u64,
    pub seed: u64,
    pub eval_clip: String,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// Fixed-width text table, one row per mode.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14} {:<66} {:>9} {:>7}", "mode", "configuration", "PSNR(dB)", "SSIM");
        let _ = writeln!(s, "{}", "-".repeat(14 + 1 + 66 + 1 + 9 + 1 + 7));
        for r in &self.rows {
            let psnr = r.psnr_db.map_or("inf".to_string(), |p| format!("{p:.2}"));
            let _ = writeln!(s, "{:<14} {:<66} {:>9} {:>7.4}", r.mode.name(), r.description, psnr, r.ssim);
        }
        s
    }
}

/// Train each mode for `cfg.train.max_steps` on `train` with the shared
/// seed and score it on `eval`. With `run_root`, each mode writes its log
/// and checkpoints to `<run_root>/<mode>/`.
pub fn ablation_report(
    cfg: &RunConfig,
    modes: &[AblationMode],
    train: &[ClipWindow],
    eval: (&Clip, &Clip, &[Vec<FlowMap>]),
    run_root: Option<&Path>,
) -> Result<AblationReport> {
    let mut rows = Vec::new();
    for &mode in modes {
        let mut c = cfg.clone();
        c.train.ablation_mode = mode;
        let dir = run_root.map(|r| r.join(mode.name()));
        let out = fit(&c, train, dir.as_deref(), None)?;
        let (report, _) = evaluate_clip(
            &out.state.generator,
            eval.0,
            eval.1,
            eval.2,
            c.generator.n_neighbors,
            c.data.crop_border,
        )?;
        rows.push(AblationRow {
            mode,
            description: mode.description().to_string(),
            psnr_db: report.mean_psnr_db,
            ssim: report.mean_ssim,
            final_total_loss: out.reports.last().map(|r| r.breakdown.total),
        });
    }
    Ok(AblationReport {
        steps: cfg.train.max_steps,
        seed: cfg.train.seed,
        eval_clip: eval.0.clip_id.clone(),
        rows,
    })
}
