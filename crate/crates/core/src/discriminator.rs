//! Convolutional real/fake discriminator.
//!
//! Stage `i` is a 3×3 convolution with `channel_schedule[i]` outputs and
//! stride 1 for even `i`, 2 for odd `i`, followed by a Leaky ReLU. Global
//! average pooling feeds a dense Leaky ReLU layer and a single sigmoid
//! output, so any input size is accepted unless `input_size` pins one.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::CHANNELS;
use crate::graph::{Graph, Var};
use crate::nn::Conv;
use crate::params::{kaiming_uniform, Bound, ParamId, ParamSet};
use crate::tensor::Tensor;

/// Probabilities are kept inside `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    /// Required `(h, w)`; `None` accepts any size.
    pub input_size: Option<(usize, usize)>,
    pub channel_schedule: Vec<usize>,
    pub leaky_slope: f64,
    pub dense_width: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl DiscriminatorConfig {
    pub fn full() -> Self {
        Self {
            input_size: None,
            channel_schedule: vec![64, 64, 128, 128, 256, 256, 512, 512],
            leaky_slope: 0.2,
            dense_width: 1024,
        }
    }

    pub fn tiny() -> Self {
        Self {
            channel_schedule: vec![8, 16],
            dense_width: 16,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_schedule.is_empty() || self.channel_schedule.contains(&0) || self.dense_width == 0 {
            return Err(Error::InvalidConfig("discriminator: empty or zero-width stage".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "discriminator: leaky_slope {} outside (0, 1)",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let mut c_in = CHANNELS;
        let mut n = 0;
        for &c in &self.channel_schedule {
            n += c_in * c * 9 + c;
            c_in = c;
        }
        n + c_in * self.dense_width + self.dense_width + self.dense_width + 1
    }
}

pub struct Discriminator {
    config: DiscriminatorConfig,
    params: ParamSet,
    stages: Vec<Conv>,
    dense_w: ParamId,
    dense_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let slope = config.leaky_slope;
        let mut c_in = CHANNELS;
        let mut stages = Vec::new();
        for (i, &c) in config.channel_schedule.iter().enumerate() {
            let stride = if i % 2 == 0 { 1 } else { 2 };
            stages.push(Conv::new(&mut ps, &mut rng, &format!("stage{i}"), c_in, c, 3, stride, 1, slope));
            c_in = c;
        }
        let d = config.dense_width;
        let dense_w = ps.add("dense.weight", kaiming_uniform(&mut rng, &[d, c_in], c_in, slope));
        let dense_b = ps.add("dense.bias", Tensor::zeros(&[d]));
        let out_w = ps.add("out.weight", kaiming_uniform(&mut rng, &[1, d], d, 1.0));
        let out_b = ps.add("out.bias", Tensor::zeros(&[1]));
        Ok(Self {
            config,
            params: ps,
            stages,
            dense_w,
            dense_b,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Record the discriminator on `x` (`[3, h, w]`); returns the clamped
    /// probability as a one-element variable.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let (c, h, w) = g.value(x).chw();
        if c != CHANNELS {
            return Err(Error::DimensionMismatch(format!("expected 3 channels, got {c}")));
        }
        if let Some(size) = self.config.input_size {
            if size != (h, w) {
                return Err(Error::DimensionMismatch(format!("expected {size:?}, got {:?}", (h, w))));
            }
        }
        let slope = self.config.leaky_slope;
        let mut y = x;
        for stage in &self.stages {
            y = stage.forward(g, p, y);
            y = g.leaky_relu(y, slope);
        }
        let pooled = g.global_avg_pool(y);
        let hidden = g.linear(pooled, p.var(self.dense_w), p.var(self.dense_b));
        let hidden = g.leaky_relu(hidden, slope);
        let logit = g.linear(hidden, p.var(self.out_w), p.var(self.out_b));
        let prob = g.sigmoid(logit);
        Ok(g.clamp(prob, PROB_EPS, 1.0 - PROB_EPS))
    }

    /// Probability that `x` is a real HR frame, in `(0, 1)`.
    pub fn discriminate(&self, x: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let out = self.forward_graph(&mut g, &p, xv)?;
        Ok(g.value(out).item())
    }
}
