//! Adam with optional single-precision state.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam state for one [`ParamSet`].
///
/// With `f32_state`, parameters and moments are rounded to single
/// precision after every update. Checkpoints store `f32`, so this makes a
/// resumed run continue bit-identically.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub f32_state: bool,
    pub steps: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

#[inline]
fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet, f32_state: bool) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            f32_state,
            steps: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::ShapeMismatch("gradient count differs from parameter count".into()));
        }
        self.steps += 1;
        let c = self.config;
        let bc1 = 1.0 - libm::pow(c.beta1, self.steps as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.steps as f64);
        let round = self.f32_state;
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= c.lr * mhat / (libm::sqrt(vhat) + c.eps);
                if round {
                    *pi = round_f32(*pi);
                    *mi = round_f32(*mi);
                    *vi = round_f32(*vi);
                }
            }
        }
        Ok(())
    }
}

/// Round every parameter to single precision.
pub fn round_params_f32(params: &mut ParamSet) {
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = round_f32(*v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut ps = ParamSet::new();
        ps.add("x", Tensor::from_vec(&[2], alloc::vec![1.0, -1.0]));
        let mut opt = Adam::new(AdamConfig::default(), &ps, false);
        let g = alloc::vec![Tensor::from_vec(&[2], alloc::vec![3.0, -0.5])];
        opt.step(&mut ps, &g).unwrap();
        let d = ps.tensors()[0].data();
        assert!((d[0] - (1.0 - 1e-4)).abs() < 1e-10);
        assert!((d[1] - (-1.0 + 1e-4)).abs() < 1e-10);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut ps = ParamSet::new();
        ps.add("x", Tensor::scalar(5.0));
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        let mut opt = Adam::new(cfg, &ps, true);
        for _ in 0..500 {
            let x = ps.tensors()[0].item();
            opt.step(&mut ps, &[Tensor::scalar(2.0 * (x - 1.0))]).unwrap();
        }
        assert!((ps.tensors()[0].item() - 1.0).abs() < 1e-2);
    }
}
