//! PSNR / SSIM on luma, per-clip reports, and temporal profiles.
//!
//! Both metrics are computed on the luma plane (`0.299 R + 0.587 G +
//! 0.114 B`) with a peak value of 1.0.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn check_dims(a: &Frame, b: &Frame) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` on luma. Identical inputs are reported as
/// [`Error::IdenticalInputs`].
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    check_dims(a, b)?;
    let (ya, yb) = (a.luminance(), b.luminance());
    let mse = ya.iter().zip(&yb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / ya.len() as f64;
    if mse == 0.0 {
        return Err(Error::IdenticalInputs);
    }
    Ok(10.0 * libm::log10(1.0 / mse))
}

/// Normalized 1-D Gaussian taps.
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter over all fully contained window positions.
fn filter_valid(p: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut tmp = alloc::vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * p[y * w + x + i]).sum();
        }
    }
    let mut out = alloc::vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over 11×11 Gaussian (σ = 1.5) windows on luma.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_dims(a, b)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::TooSmall(format!("{h}x{w} is below the {SSIM_WINDOW}px SSIM window")));
    }
    let (x, y) = (a.luminance(), b.luminance());
    let k = gaussian_taps();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(a, b)| a * b).collect() };
    let mx = filter_valid(&x, h, w, &k);
    let my = filter_valid(&y, h, w, &k);
    let mxx = filter_valid(&prod(&x, &x), h, w, &k);
    let myy = filter_valid(&prod(&y, &y), h, w, &k);
    let mxy = filter_valid(&prod(&x, &y), h, w, &k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
            / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    Ok(total / mx.len() as f64)
}

/// Scores for one frame. `psnr_db` is `None` for a pixel-exact match.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub psnr_db: Option<f64>,
    pub ssim: f64,
}

impl FrameScore {
    pub fn compute(sr: &Frame, hr: &Frame) -> Result<Self> {
        let psnr_db = match psnr(sr, hr) {
            Ok(v) => Some(v),
            Err(Error::IdenticalInputs) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            psnr_db,
            ssim: ssim(sr, hr)?,
        })
    }

    pub fn is_perfect(&self) -> bool {
        self.psnr_db.is_none()
    }
}

/// Per-clip metric summary.
///
/// `mean_psnr_db` averages the frames that are not pixel-exact matches and
/// is `None` when every frame matched exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub clip_id: String,
    pub per_frame: Vec<FrameScore>,
    pub mean_psnr_db: Option<f64>,
    pub mean_ssim: f64,
    pub perfect_frames: usize,
}

impl MetricReport {
    pub fn from_scores(clip_id: impl Into<String>, per_frame: Vec<FrameScore>) -> Result<Self> {
        if per_frame.is_empty() {
            return Err(Error::EmptySequence);
        }
        let finite: Vec<f64> = per_frame.iter().filter_map(|s| s.psnr_db).collect();
        let mean_psnr_db = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
        let mean_ssim = per_frame.iter().map(|s| s.ssim).sum::<f64>() / per_frame.len() as f64;
        Ok(Self {
            clip_id: clip_id.into(),
            perfect_frames: per_frame.len() - finite.len(),
            per_frame,
            mean_psnr_db,
            mean_ssim,
        })
    }
}

/// Stack row `row` of every frame into a `frames × width` image.
pub fn temporal_profile(frames: &[Frame], row: usize) -> Result<Frame> {
    let first = frames.first().ok_or(Error::EmptySequence)?;
    let (h, w) = first.dims();
    if row >= h {
        return Err(Error::BadIndex(format!("row {row} outside frame height {h}")));
    }
    if let Some(f) = frames.iter().find(|f| f.dims() != (h, w)) {
        return Err(Error::InconsistentDimensions(format!("{:?} vs {:?}", f.dims(), (h, w))));
    }
    Ok(Frame::from_fn(frames.len(), w, |c, t, x| frames[t].get(c, row, x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_identical_is_error() {
        let a = Frame::constant(4, 4, 0.5);
        assert_eq!(psnr(&a, &a), Err(Error::IdenticalInputs));
    }

    #[test]
    fn ssim_too_small() {
        let a = Frame::constant(10, 20, 0.5);
        assert!(matches!(ssim(&a, &a), Err(Error::TooSmall(_))));
    }

    #[test]
    fn profile_shape_and_errors() {
        let frames: Vec<Frame> = (0..7).map(|_| Frame::constant(4, 448, 0.2)).collect();
        let p = temporal_profile(&frames, 3).unwrap();
        assert_eq!(p.dims(), (7, 448));
        assert!(matches!(temporal_profile(&frames, 4), Err(Error::BadIndex(_))));
    }

    #[test]
    fn report_means() {
        let scores = alloc::vec![
            FrameScore { psnr_db: Some(30.0), ssim: 0.9 },
            FrameScore { psnr_db: None, ssim: 1.0 },
            FrameScore { psnr_db: Some(20.0), ssim: 0.5 },
        ];
        let r = MetricReport::from_scores("c", scores).unwrap();
        assert_eq!(r.mean_psnr_db, Some(25.0));
        assert!((r.mean_ssim - 0.8).abs() < 1e-12);
        assert_eq!(r.perfect_frames, 1);
    }
}
