//! Separable bicubic resampling with the Keys (a = -0.5) kernel.
//!
//! Sampling is half-pixel centered: output pixel `i` samples source
//! coordinate `(i + 0.5) / scale - 0.5`. When shrinking, the kernel is
//! stretched by `1 / scale` so that it also acts as the anti-aliasing
//! prefilter. Samples past the border replicate the edge pixel.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, CHANNELS};
use crate::tensor::Tensor;

const KEYS_A: f64 = -0.5;

/// A positive rational resize factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u32,
    pub den: u32,
}

impl Ratio {
    pub const fn new(num: u32, den: u32) -> Self {
        Self { num, den }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `floor(len * num / den)` computed exactly.
    pub fn apply(self, len: usize) -> usize {
        (len as u64 * self.num as u64 / self.den as u64) as usize
    }
}

/// The Keys cubic convolution kernel.
pub fn keys_kernel(x: f64) -> f64 {
    let a = KEYS_A;
    let x = libm::fabs(x);
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Per-output-pixel taps: `(first source index, weights)`; indices are
/// clamped when applied.
struct AxisTaps {
    taps: Vec<(isize, Vec<f64>)>,
}

impl AxisTaps {
    fn new(out_len: usize, scale: f64) -> Self {
        let stretch = if scale < 1.0 { 1.0 / scale } else { 1.0 };
        let support = 2.0 * stretch;
        let taps = (0..out_len)
            .map(|i| {
                let center = (i as f64 + 0.5) / scale - 0.5;
                let first = libm::floor(center - support) as isize + 1;
                let last = libm::ceil(center + support) as isize - 1;
                let mut weights: Vec<f64> = (first..=last)
                    .map(|j| keys_kernel((center - j as f64) / stretch))
                    .collect();
                let total: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= total;
                }
                (first, weights)
            })
            .collect();
        Self { taps }
    }

    #[inline]
    fn sample(&self, i: usize, line: impl Fn(usize) -> f64, len: usize) -> f64 {
        let (first, weights) = &self.taps[i];
        weights
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let j = (*first + k as isize).clamp(0, len as isize - 1) as usize;
                w * line(j)
            })
            .sum()
    }
}

/// Resample every plane of a `[c, h, w]` tensor to `out_h × out_w`.
/// Values are not clamped.
pub fn resize_tensor(t: &Tensor, out_h: usize, out_w: usize, scale_y: f64, scale_x: f64) -> Tensor {
    let (c, h, w) = t.chw();
    let tx = AxisTaps::new(out_w, scale_x);
    let ty = AxisTaps::new(out_h, scale_y);
    let mut out = Tensor::zeros(&[c, out_h, out_w]);
    let mut tmp = alloc::vec![0.0; h * out_w];
    for ch in 0..c {
        let plane = t.plane(ch);
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for x in 0..out_w {
                tmp[y * out_w + x] = tx.sample(x, |j| row[j], w);
            }
        }
        for y in 0..out_h {
            for x in 0..out_w {
                let v = ty.sample(y, |j| tmp[j * out_w + x], h);
                out.set3(ch, y, x, v);
            }
        }
    }
    out
}

/// Bicubic resize of a frame by `scale`; output is
/// `floor(h * scale) × floor(w * scale)`, clamped to `[0, 1]`.
pub fn bicubic_resize(frame: &Frame, scale: Ratio) -> Result<Frame> {
    if scale.num == 0 || scale.den == 0 {
        return Err(Error::DegenerateOutput(format!("invalid scale {}/{}", scale.num, scale.den)));
    }
    let (h, w) = frame.dims();
    let (oh, ow) = (scale.apply(h), scale.apply(w));
    if oh == 0 || ow == 0 {
        return Err(Error::DegenerateOutput(format!(
            "{h}x{w} at scale {}/{} gives {oh}x{ow}",
            scale.num, scale.den
        )));
    }
    let out = resize_tensor(frame.tensor(), oh, ow, scale.value(), scale.value());
    debug_assert_eq!(out.shape()[0], CHANNELS);
    Ok(Frame::from_tensor_clamped(out))
}
