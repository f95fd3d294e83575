//! Self-supervised LR/HR pair generation, corpus splitting, and clip
//! windowing.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowMap;
use crate::frame::Frame;
use crate::resize::{bicubic_resize, Ratio};

/// An ordered sequence of equally sized frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub clip_id: String,
    pub source_path: String,
    frames: Vec<Frame>,
}

impl Clip {
    pub fn new(clip_id: impl Into<String>, source_path: impl Into<String>, frames: Vec<Frame>) -> Result<Self> {
        if let Some(first) = frames.first() {
            if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.dims() != first.dims()) {
                return Err(Error::InconsistentDimensions(format!(
                    "frame {i} is {:?}, frame 0 is {:?}",
                    f.dims(),
                    first.dims()
                )));
            }
        }
        Ok(Self {
            clip_id: clip_id.into(),
            source_path: source_path.into(),
            frames,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(Frame::dims)
    }
}

/// The generator's input unit: a target LR frame, its `n` predecessors
/// (most recent first) with their flows, and optionally the HR target.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipWindow {
    pub target_lr: Frame,
    pub neighbors_lr: Vec<Frame>,
    pub flows: Vec<FlowMap>,
    pub target_hr: Option<Frame>,
}

impl ClipWindow {
    pub fn n(&self) -> usize {
        self.neighbors_lr.len()
    }

    pub fn validate(&self, scale: usize) -> Result<()> {
        let n = self.neighbors_lr.len();
        if n == 0 || self.flows.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "window has {n} neighbors and {} flows",
                self.flows.len()
            )));
        }
        let dims = self.target_lr.dims();
        for (k, (f, fl)) in self.neighbors_lr.iter().zip(&self.flows).enumerate() {
            if f.dims() != dims || fl.dims() != dims {
                return Err(Error::DimensionMismatch(format!(
                    "neighbor {k}: frame {:?} flow {:?}, target {:?}",
                    f.dims(),
                    fl.dims(),
                    dims
                )));
            }
        }
        if let Some(hr) = &self.target_hr {
            if hr.dims() != (dims.0 * scale, dims.1 * scale) {
                return Err(Error::DimensionMismatch(format!(
                    "HR target {:?} is not {scale}x LR {:?}",
                    hr.dims(),
                    dims
                )));
            }
        }
        Ok(())
    }
}

/// Train/val/test partition of clip ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Center-crop `hr` to multiples of `scale_factor` and downsample it.
pub fn make_pair(hr_frame: &Frame, scale_factor: usize) -> Result<(Frame, Frame)> {
    if scale_factor == 0 {
        return Err(Error::DegenerateOutput("scale factor 0".into()));
    }
    let (h, w) = hr_frame.dims();
    let (ch, cw) = (h / scale_factor * scale_factor, w / scale_factor * scale_factor);
    if ch == 0 || cw == 0 {
        return Err(Error::DegenerateOutput(format!(
            "{h}x{w} frame is smaller than scale factor {scale_factor}"
        )));
    }
    let hr = if (ch, cw) == (h, w) {
        hr_frame.clone()
    } else {
        hr_frame.crop((h - ch) / 2, (w - cw) / 2, ch, cw)?
    };
    let lr = bicubic_resize(&hr, Ratio::new(1, scale_factor as u32))?;
    Ok((lr, hr))
}

/// Seeded shuffle then floor allocation; the remainder goes to train.
pub fn split_dataset(clip_ids: &[String], ratios: (f64, f64, f64), seed: u64) -> Result<DatasetSplit> {
    let (rt, rv, rs) = ratios;
    if clip_ids.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if [rt, rv, rs].iter().any(|r| !(0.0..=1.0).contains(r)) || libm::fabs(rt + rv + rs - 1.0) > 1e-9 {
        return Err(Error::BadRatios(format!("({rt}, {rv}, {rs}) must be in [0,1] and sum to 1")));
    }
    let mut ids = clip_ids.to_vec();
    ids.sort();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n = ids.len() as f64;
    // tolerate representation error such as 10 * 0.1
    let n_val = libm::floor(n * rv + 1e-9) as usize;
    let n_test = libm::floor(n * rs + 1e-9) as usize;
    let n_train = ids.len() - n_val - n_test;
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(DatasetSplit {
        seed,
        train: ids,
        val,
        test,
    })
}

/// Index of the `k`-th predecessor of `t` (1-based `k`), repeating the
/// first frame before the clip start.
pub fn neighbor_index(t: usize, k: usize) -> usize {
    t.saturating_sub(k)
}

/// Build the window for target frame `t` with `n` predecessors.
/// `flows[k - 1]` must be the flow for neighbor `k`.
pub fn window_clip(
    lr_clip: &Clip,
    t: usize,
    n: usize,
    flows: Vec<FlowMap>,
    hr_clip: Option<&Clip>,
) -> Result<ClipWindow> {
    if t >= lr_clip.len() {
        return Err(Error::BadIndex(format!("t={t} outside clip of {} frames", lr_clip.len())));
    }
    if n == 0 {
        return Err(Error::BadIndex("window needs n >= 1 neighbors".into()));
    }
    if flows.len() != n {
        return Err(Error::BadIndex(format!("expected {n} flows, got {}", flows.len())));
    }
    let frames = lr_clip.frames();
    let target_hr = match hr_clip {
        Some(hr) => Some(
            hr.frames()
                .get(t)
                .cloned()
                .ok_or_else(|| Error::BadIndex(format!("HR clip has no frame {t}")))?,
        ),
        None => None,
    };
    let window = ClipWindow {
        target_lr: frames[t].clone(),
        neighbors_lr: (1..=n).map(|k| frames[neighbor_index(t, k)].clone()).collect(),
        flows,
        target_hr,
    };
    let scale = match (&window.target_hr, lr_clip.dims()) {
        (Some(hr), Some((lh, _))) => hr.height() / lh.max(1),
        _ => 1,
    };
    window.validate(scale.max(1))?;
    Ok(window)
}
