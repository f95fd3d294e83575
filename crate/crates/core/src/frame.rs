//! The [`Frame`] image type shared by every stage of the pipeline.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of channels carried by every pipeline frame.
pub const CHANNELS: usize = 3;

/// An RGB image with intensities in `[0, 1]`, stored channels-first.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pixels: Tensor,
}

impl Frame {
    /// Wrap a `[3, h, w]` tensor, rejecting out-of-range or non-finite values.
    pub fn from_tensor(pixels: Tensor) -> Result<Self> {
        if pixels.shape().len() != 3 || pixels.shape()[0] != CHANNELS {
            return Err(Error::InvalidFrame(format!(
                "expected [3, h, w], got {:?}",
                pixels.shape()
            )));
        }
        if pixels.shape()[1] == 0 || pixels.shape()[2] == 0 {
            return Err(Error::InvalidFrame("empty frame".into()));
        }
        if let Some(v) = pixels.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidFrame(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { pixels })
    }

    /// Wrap a `[3, h, w]` tensor after clamping into `[0, 1]`. NaN maps to 0.
    pub fn from_tensor_clamped(pixels: Tensor) -> Self {
        assert!(pixels.shape().len() == 3 && pixels.shape()[0] == CHANNELS);
        let pixels = pixels.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Self { pixels }
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Self {
            pixels: Tensor::full(&[CHANNELS, height, width], value),
        }
    }

    /// Build from a function of `(channel, y, x)`; values are clamped.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(CHANNELS * height * width);
        for c in 0..CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x).clamp(0.0, 1.0));
                }
            }
        }
        Self {
            pixels: Tensor::from_vec(&[CHANNELS, height, width], data),
        }
    }

    /// Interleaved 8-bit samples with 1 (gray), 3 (RGB) or 4 (RGBA)
    /// channels. Gray is replicated to RGB and alpha is dropped.
    pub fn from_interleaved_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::InvalidFrame(format!("unsupported channel count {channels}")));
        }
        if bytes.len() != height * width * channels {
            return Err(Error::InvalidFrame("sample buffer length mismatch".into()));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidFrame("empty frame".into()));
        }
        Ok(Self::from_fn(height, width, |c, y, x| {
            let src = if channels == 1 { 0 } else { c };
            bytes[(y * width + x) * channels + src] as f64 / 255.0
        }))
    }

    /// Interleaved RGB bytes, rounding `v * 255` to nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let (h, w) = (self.height(), self.width());
        let mut out = Vec::with_capacity(h * w * CHANNELS);
        for y in 0..h {
            for x in 0..w {
                for c in 0..CHANNELS {
                    out.push(quantize_u8(self.pixels.at3(c, y, x)));
                }
            }
        }
        out
    }

    /// Round-trip through 8-bit quantization.
    pub fn quantized(&self) -> Self {
        Self {
            pixels: self.pixels.map(|v| quantize_u8(v) as f64 / 255.0),
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.pixels.at3(c, y, x)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.pixels
    }

    pub fn into_tensor(self) -> Tensor {
        self.pixels
    }

    /// Luma plane `0.299 R + 0.587 G + 0.114 B`, row-major.
    pub fn luminance(&self) -> Vec<f64> {
        let (r, g, b) = (self.pixels.plane(0), self.pixels.plane(1), self.pixels.plane(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    }

    /// Sub-rectangle starting at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || top + height > self.height() || left + width > self.width() {
            return Err(Error::BadIndex(format!(
                "crop {height}x{width}@({top},{left}) outside {}x{}",
                self.height(),
                self.width()
            )));
        }
        Ok(Self::from_fn(height, width, |c, y, x| self.get(c, top + y, left + x)))
    }
}

#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        let t = Tensor::full(&[3, 2, 2], 1.5);
        assert!(matches!(Frame::from_tensor(t), Err(Error::InvalidFrame(_))));
    }

    #[test]
    fn gray_is_replicated() {
        let f = Frame::from_interleaved_u8(1, 2, 1, &[0, 255]).unwrap();
        for c in 0..3 {
            assert_eq!(f.get(c, 0, 0), 0.0);
            assert_eq!(f.get(c, 0, 1), 1.0);
        }
    }

    #[test]
    fn rgb8_round_trip_is_exact() {
        let bytes: Vec<u8> = (0..4 * 5 * 3).map(|i| (i * 7 % 256) as u8).collect();
        let f = Frame::from_interleaved_u8(4, 5, 3, &bytes).unwrap();
        assert_eq!(f.to_rgb8(), bytes);
    }
}
