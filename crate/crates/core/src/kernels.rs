//! Forward and backward kernels for the layers used by the networks.
//!
//! All kernels operate on single `[c, h, w]` samples; batching is done by
//! the caller.

use alloc::vec::Vec;

use crate::tensor::Tensor;

#[inline]
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

#[inline]
pub fn conv_transpose_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input - 1) * stride + kernel - 2 * pad
}

/// Offset range `[lo, hi)` of output positions `o` such that
/// `o * stride + k - pad` lands inside `[0, input)`.
#[inline]
fn valid_range(out_len: usize, input: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // need o*stride + k >= pad and o*stride + k - pad < input
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let limit = input + pad; // o*stride + k < limit
    let hi = if limit > k {
        ((limit - k).div_ceil(stride)).min(out_len)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// `weight: [co, ci, k, k]`, `bias: [co]`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let (ci_n, h, w) = x.chw();
    let ws = weight.shape();
    let (co_n, k) = (ws[0], ws[2]);
    assert_eq!(ws[1], ci_n, "conv2d input channel mismatch");
    let oh = conv_out_len(h, k, stride, pad);
    let ow = conv_out_len(w, k, stride, pad);
    let mut out = Tensor::zeros(&[co_n, oh, ow]);
    let xd = x.data();
    let wd = weight.data();
    let od = out.data_mut();
    for co in 0..co_n {
        let oplane = &mut od[co * oh * ow..(co + 1) * oh * ow];
        if let Some(b) = bias {
            oplane.fill(b.data()[co]);
        }
        for ci in 0..ci_n {
            let xplane = &xd[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                let (oy0, oy1) = valid_range(oh, h, ky, stride, pad);
                for kx in 0..k {
                    let wv = wd[((co * ci_n + ci) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox0, ox1) = valid_range(ow, w, kx, stride, pad);
                    for oy in oy0..oy1 {
                        let iy = oy * stride + ky - pad;
                        let xrow = &xplane[iy * w..(iy + 1) * w];
                        let orow = &mut oplane[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let base = kx as isize - pad as isize;
                            for ox in ox0..ox1 {
                                orow[ox] += wv * xrow[(ox as isize + base) as usize];
                            }
                        } else {
                            for ox in ox0..ox1 {
                                orow[ox] += wv * xrow[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (ci_n, h, w) = x.chw();
    let ws = weight.shape();
    let (co_n, k) = (ws[0], ws[2]);
    let (_, oh, ow) = grad_out.chw();
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(ws);
    let mut gb = Tensor::zeros(&[co_n]);
    let xd = x.data();
    let wd = weight.data();
    let gd = grad_out.data();
    for co in 0..co_n {
        let gplane = &gd[co * oh * ow..(co + 1) * oh * ow];
        gb.data_mut()[co] = gplane.iter().sum();
        for ci in 0..ci_n {
            let xplane = &xd[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                let (oy0, oy1) = valid_range(oh, h, ky, stride, pad);
                for kx in 0..k {
                    let widx = ((co * ci_n + ci) * k + ky) * k + kx;
                    let wv = wd[widx];
                    let (ox0, ox1) = valid_range(ow, w, kx, stride, pad);
                    let mut acc = 0.0;
                    let gxd = gx.data_mut();
                    for oy in oy0..oy1 {
                        let iy = oy * stride + ky - pad;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        let row_off = ci * h * w + iy * w;
                        for (ox, &g) in grow.iter().enumerate().take(ox1).skip(ox0) {
                            let ix = ox * stride + kx - pad;
                            acc += g * xplane[iy * w + ix];
                            gxd[row_off + ix] += g * wv;
                        }
                    }
                    gw.data_mut()[widx] += acc;
                }
            }
        }
    }
    (gx, gw, gb)
}

/// `weight: [ci, co, k, k]`, `bias: [co]`.
pub fn conv_transpose2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Tensor {
    let (ci_n, h, w) = x.chw();
    let ws = weight.shape();
    assert_eq!(ws[0], ci_n, "conv_transpose2d input channel mismatch");
    let (co_n, k) = (ws[1], ws[2]);
    let oh = conv_transpose_out_len(h, k, stride, pad);
    let ow = conv_transpose_out_len(w, k, stride, pad);
    let mut out = Tensor::zeros(&[co_n, oh, ow]);
    let xd = x.data();
    let wd = weight.data();
    let od = out.data_mut();
    for co in 0..co_n {
        let oplane = &mut od[co * oh * ow..(co + 1) * oh * ow];
        if let Some(b) = bias {
            oplane.fill(b.data()[co]);
        }
        for ci in 0..ci_n {
            let xplane = &xd[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                // output row o = i*stride + ky - pad is an "output" of the
                // adjoint convolution; reuse the range helper with roles swapped
                let (iy0, iy1) = valid_range(h, oh, ky, stride, pad);
                for kx in 0..k {
                    let wv = wd[((ci * co_n + co) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ix0, ix1) = valid_range(w, ow, kx, stride, pad);
                    for iy in iy0..iy1 {
                        let oy = iy * stride + ky - pad;
                        let xrow = &xplane[iy * w..(iy + 1) * w];
                        let orow = &mut oplane[oy * ow..(oy + 1) * ow];
                        for ix in ix0..ix1 {
                            orow[ix * stride + kx - pad] += wv * xrow[ix];
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn conv_transpose2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (ci_n, h, w) = x.chw();
    let ws = weight.shape();
    let (co_n, k) = (ws[1], ws[2]);
    let (_, oh, ow) = grad_out.chw();
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(ws);
    let mut gb = Tensor::zeros(&[co_n]);
    let xd = x.data();
    let wd = weight.data();
    let gd = grad_out.data();
    for co in 0..co_n {
        let gplane = &gd[co * oh * ow..(co + 1) * oh * ow];
        gb.data_mut()[co] = gplane.iter().sum();
        for ci in 0..ci_n {
            let xplane = &xd[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                let (iy0, iy1) = valid_range(h, oh, ky, stride, pad);
                for kx in 0..k {
                    let widx = ((ci * co_n + co) * k + ky) * k + kx;
                    let wv = wd[widx];
                    let (ix0, ix1) = valid_range(w, ow, kx, stride, pad);
                    let mut acc = 0.0;
                    let gxd = gx.data_mut();
                    for iy in iy0..iy1 {
                        let oy = iy * stride + ky - pad;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        for ix in ix0..ix1 {
                            let g = grow[ix * stride + kx - pad];
                            acc += g * xplane[iy * w + ix];
                            gxd[ci * h * w + iy * w + ix] += g * wv;
                        }
                    }
                    gw.data_mut()[widx] += acc;
                }
            }
        }
    }
    (gx, gw, gb)
}

/// 2×2 max pooling with stride 2; returns the pooled tensor and the flat
/// source index of each maximum.
pub fn max_pool2(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (c, h, w) = x.chw();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let mut arg = Vec::with_capacity(c * oh * ow);
    let xd = x.data();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = usize::MAX;
                let mut best_v = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = (ch * h + 2 * oy + dy) * w + 2 * ox + dx;
                        if xd[idx] > best_v {
                            best_v = xd[idx];
                            best = idx;
                        }
                    }
                }
                out.set3(ch, oy, ox, best_v);
                arg.push(best);
            }
        }
    }
    (out, arg)
}
