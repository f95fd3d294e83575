//! Dense optical flow (pyramidal Horn–Schunck) and backward warping.
//!
//! A [`FlowMap`] `F` estimated from `(source, target)` satisfies
//! `target(y, x) ≈ source(y + v, x + u)`, so `warp(source, F)` aligns the
//! source with the target.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::resize::resize_tensor;
use crate::tensor::Tensor;

/// Per-pixel displacement field, stored in single precision.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMap {
    height: usize,
    width: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            u: vec![0.0; height * width],
            v: vec![0.0; height * width],
        }
    }

    pub fn new(height: usize, width: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if u.len() != height * width || v.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "flow planes of {} / {} values for {height}x{width}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidFrame("non-finite flow value".into()));
        }
        Ok(Self { height, width, u, v })
    }

    /// Constant displacement everywhere.
    pub fn uniform(height: usize, width: usize, u: f32, v: f32) -> Self {
        Self {
            height,
            width,
            u: vec![u; height * width],
            v: vec![v; height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    /// `[2, h, w]` tensor with `u` then `v`.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.u.iter().chain(&self.v).map(|&x| x as f64).collect();
        Tensor::from_vec(&[2, self.height, self.width], data)
    }

    /// Mean Euclidean displacement magnitude.
    pub fn mean_magnitude(&self) -> f64 {
        let s: f64 = self
            .u
            .iter()
            .zip(&self.v)
            .map(|(&u, &v)| libm::sqrt((u as f64) * (u as f64) + (v as f64) * (v as f64)))
            .sum();
        s / self.u.len().max(1) as f64
    }
}

/// Horn–Schunck pyramid settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    /// Maximum pyramid levels, including full resolution.
    pub levels: usize,
    /// Coarsest level is never smaller than this on either side.
    pub min_size: usize,
    /// Re-linearizations (warps) per level.
    pub warps: usize,
    /// Jacobi iterations per warp.
    pub iterations: usize,
    /// Smoothness weight, in units of intensity gradient (intensities in [0,1]).
    pub alpha: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 4,
            min_size: 8,
            warps: 3,
            iterations: 100,
            alpha: 0.05,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.warps == 0 || self.alpha.is_nan() || self.alpha <= 0.0 || self.min_size == 0 {
            return Err(Error::InvalidConfig(format!("bad flow params {self:?}")));
        }
        Ok(())
    }
}

/// Single-channel image used inside the estimator.
#[derive(Clone)]
struct Plane {
    h: usize,
    w: usize,
    d: Vec<f64>,
}

impl Plane {
    #[inline]
    fn at(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.d[y * self.w + x]
    }

    /// Bilinear sample with edge clamping.
    #[inline]
    fn bilinear(&self, y: f64, x: f64) -> f64 {
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let (y0, x0) = (libm::floor(y), libm::floor(x));
        let (fy, fx) = (y - y0, x - x0);
        let (y0, x0) = (y0 as isize, x0 as isize);
        let a = self.at(y0, x0) * (1.0 - fx) + self.at(y0, x0 + 1) * fx;
        let b = self.at(y0 + 1, x0) * (1.0 - fx) + self.at(y0 + 1, x0 + 1) * fx;
        a * (1.0 - fy) + b * fy
    }

    /// Binomial blur then 2× decimation; odd sizes round up.
    fn pyr_down(&self) -> Plane {
        const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (oh, ow) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let mut tmp = vec![0.0; self.h * ow];
        for y in 0..self.h {
            for x in 0..ow {
                tmp[y * ow + x] = K
                    .iter()
                    .enumerate()
                    .map(|(i, k)| k * self.at(y as isize, 2 * x as isize + i as isize - 2))
                    .sum();
            }
        }
        let t = Plane { h: self.h, w: ow, d: tmp };
        let mut d = vec![0.0; oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                d[y * ow + x] = K
                    .iter()
                    .enumerate()
                    .map(|(i, k)| k * t.at(2 * y as isize + i as isize - 2, x as isize))
                    .sum();
            }
        }
        Plane { h: oh, w: ow, d }
    }

    fn warp(&self, u: &[f64], v: &[f64]) -> Plane {
        let mut d = vec![0.0; self.h * self.w];
        for y in 0..self.h {
            for x in 0..self.w {
                let i = y * self.w + x;
                d[i] = self.bilinear(y as f64 + v[i], x as f64 + u[i]);
            }
        }
        Plane { h: self.h, w: self.w, d }
    }

    /// Central-difference gradients with replicated borders.
    fn gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let mut gx = vec![0.0; self.h * self.w];
        let mut gy = vec![0.0; self.h * self.w];
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let i = y as usize * self.w + x as usize;
                gx[i] = 0.5 * (self.at(y, x + 1) - self.at(y, x - 1));
                gy[i] = 0.5 * (self.at(y + 1, x) - self.at(y - 1, x));
            }
        }
        (gx, gy)
    }
}

fn luma_plane(f: &Frame) -> Plane {
    Plane {
        h: f.height(),
        w: f.width(),
        d: f.luminance(),
    }
}

/// Horn–Schunck neighborhood average (1/6 edge, 1/12 corner weights).
fn hs_average(field: &[f64], h: usize, w: usize, out: &mut [f64]) {
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        field[y * w + x]
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let edge = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1);
            let corner = at(y - 1, x - 1) + at(y - 1, x + 1) + at(y + 1, x - 1) + at(y + 1, x + 1);
            out[y as usize * w + x as usize] = edge / 6.0 + corner / 12.0;
        }
    }
}

fn refine_level(source: &Plane, target: &Plane, u: &mut [f64], v: &mut [f64], params: &FlowParams) {
    let (h, w) = (target.h, target.w);
    let n = h * w;
    let a2 = params.alpha * params.alpha;
    let mut ubar = vec![0.0; n];
    let mut vbar = vec![0.0; n];
    let (tgx, tgy) = target.gradients();
    for _ in 0..params.warps {
        let warped = source.warp(u, v);
        let (sgx, sgy) = warped.gradients();
        let ix: Vec<f64> = sgx.iter().zip(&tgx).map(|(a, b)| 0.5 * (a + b)).collect();
        let iy: Vec<f64> = sgy.iter().zip(&tgy).map(|(a, b)| 0.5 * (a + b)).collect();
        let it: Vec<f64> = warped.d.iter().zip(&target.d).map(|(a, b)| a - b).collect();
        let (u0, v0) = (u.to_vec(), v.to_vec());
        for _ in 0..params.iterations {
            hs_average(u, h, w, &mut ubar);
            hs_average(v, h, w, &mut vbar);
            for i in 0..n {
                let r = ix[i] * (ubar[i] - u0[i]) + iy[i] * (vbar[i] - v0[i]) + it[i];
                let t = r / (a2 + ix[i] * ix[i] + iy[i] * iy[i]);
                u[i] = ubar[i] - ix[i] * t;
                v[i] = vbar[i] - iy[i] * t;
            }
        }
    }
}

/// Estimate the flow that maps target coordinates onto source content.
pub fn estimate_flow(source: &Frame, target: &Frame, params: &FlowParams) -> Result<FlowMap> {
    if source.dims() != target.dims() {
        return Err(Error::DimensionMismatch(format!(
            "source {:?} vs target {:?}",
            source.dims(),
            target.dims()
        )));
    }
    params.validate()?;
    let mut src = vec![luma_plane(source)];
    let mut tgt = vec![luma_plane(target)];
    while src.len() < params.levels {
        let last = src.last().unwrap();
        if last.h.div_ceil(2) < params.min_size || last.w.div_ceil(2) < params.min_size {
            break;
        }
        let s = last.pyr_down();
        let t = tgt.last().unwrap().pyr_down();
        src.push(s);
        tgt.push(t);
    }

    let coarsest = src.last().unwrap();
    let mut u = vec![0.0; coarsest.h * coarsest.w];
    let mut v = vec![0.0; coarsest.h * coarsest.w];
    let (mut ch, mut cw) = (coarsest.h, coarsest.w);
    for level in (0..src.len()).rev() {
        let (s, t) = (&src[level], &tgt[level]);
        if (s.h, s.w) != (ch, cw) {
            let (sy, sx) = (s.h as f64 / ch as f64, s.w as f64 / cw as f64);
            let up = resize_tensor(
                &Tensor::from_vec(&[2, ch, cw], u.iter().chain(&v).copied().collect()),
                s.h,
                s.w,
                sy,
                sx,
            );
            let (uu, vv) = up.data().split_at(s.h * s.w);
            u = uu.iter().map(|x| x * sx).collect();
            v = vv.iter().map(|x| x * sy).collect();
            (ch, cw) = (s.h, s.w);
        }
        refine_level(s, t, &mut u, &mut v, params);
    }
    let (h, w) = target.dims();
    FlowMap::new(
        h,
        w,
        u.iter().map(|&x| x as f32).collect(),
        v.iter().map(|&x| x as f32).collect(),
    )
}

/// Backward warp: `out(y, x) = frame(y + v, x + u)`, bilinear, clamped to
/// the frame edge.
pub fn warp(frame: &Frame, flow: &FlowMap) -> Result<Frame> {
    if frame.dims() != flow.dims() {
        return Err(Error::DimensionMismatch(format!(
            "frame {:?} vs flow {:?}",
            frame.dims(),
            flow.dims()
        )));
    }
    let (h, w) = frame.dims();
    let u: Vec<f64> = flow.u.iter().map(|&x| x as f64).collect();
    let v: Vec<f64> = flow.v.iter().map(|&x| x as f64).collect();
    let mut data = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        let plane = Plane {
            h,
            w,
            d: frame.tensor().plane(c).to_vec(),
        };
        data.extend(plane.warp(&u, &v).d);
    }
    Ok(Frame::from_tensor_clamped(Tensor::from_vec(&[3, h, w], data)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize) -> Frame {
        Frame::from_fn(h, w, |c, y, x| {
            let (y, x) = (y as f64, x as f64);
            0.5 + 0.2 * libm::sin(0.35 * x + 0.1 * c as f64) * libm::cos(0.27 * y)
                + 0.15 * libm::sin(0.19 * (x + y))
        })
    }

    #[test]
    fn zero_flow_warp_is_identity() {
        let f = textured(9, 11);
        let g = warp(&f, &FlowMap::zeros(9, 11)).unwrap();
        assert!(f.tensor().max_abs_diff(g.tensor()) < 1e-12);
    }

    #[test]
    fn unit_flow_shifts_left_with_edge_clamp() {
        let f = textured(6, 8);
        let g = warp(&f, &FlowMap::uniform(6, 8, 1.0, 0.0)).unwrap();
        for c in 0..3 {
            for y in 0..6 {
                for x in 0..8 {
                    let src = (x + 1).min(7);
                    assert!(libm::fabs(g.get(c, y, x) - f.get(c, y, src)) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_frames_give_exactly_zero_flow() {
        let a = Frame::constant(16, 16, 0.4);
        let b = Frame::constant(16, 16, 0.7);
        let fl = estimate_flow(&a, &b, &FlowParams::default()).unwrap();
        assert!(fl.u().iter().chain(fl.v()).all(|&x| x == 0.0));
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let a = textured(24, 20);
        let fl = estimate_flow(&a, &a, &FlowParams::default()).unwrap();
        assert!(fl.mean_magnitude() < 0.05);
    }

    #[test]
    fn mismatched_dims() {
        let a = Frame::constant(4, 4, 0.1);
        let b = Frame::constant(4, 5, 0.1);
        assert!(matches!(
            estimate_flow(&a, &b, &FlowParams::default()),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(warp(&a, &FlowMap::zeros(5, 4)), Err(Error::DimensionMismatch(_))));
    }
}
