//! Parameterized layers built on [`ParamSet`] and [`Graph`].

use alloc::format;

use rand::Rng;

use crate::graph::{Graph, Var};
use crate::params::{kaiming_uniform, Bound, ParamId, ParamSet};
use crate::tensor::Tensor;

/// Initial negative slope of every Parametric ReLU.
pub const PRELU_INIT: f64 = 0.25;

#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    /// Square `k × k` convolution, Kaiming-uniform weights and zero bias.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamSet,
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        slope: f64,
    ) -> Self {
        let weight = ps.add(
            format!("{name}.weight"),
            kaiming_uniform(rng, &[c_out, c_in, k, k], c_in * k * k, slope),
        );
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[c_out]));
        Self { weight, bias, stride, pad }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        g.conv2d(x, p.var(self.weight), Some(p.var(self.bias)), self.stride, self.pad)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvTranspose {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTranspose {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamSet,
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        slope: f64,
    ) -> Self {
        // each output pixel sees (k / stride)^2 taps per input channel
        let taps = (k / stride).max(1);
        let weight = ps.add(
            format!("{name}.weight"),
            kaiming_uniform(rng, &[c_in, c_out, k, k], c_in * taps * taps, slope),
        );
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[c_out]));
        Self { weight, bias, stride, pad }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        g.conv_transpose2d(x, p.var(self.weight), Some(p.var(self.bias)), self.stride, self.pad)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PRelu {
    pub slope: ParamId,
}

impl PRelu {
    pub fn new(ps: &mut ParamSet, name: &str) -> Self {
        Self {
            slope: ps.add(format!("{name}.slope"), Tensor::scalar(PRELU_INIT)),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        g.prelu(x, p.var(self.slope))
    }
}

/// Convolution followed by a Parametric ReLU.
#[derive(Clone, Copy, Debug)]
pub struct ConvAct {
    pub conv: Conv,
    pub act: PRelu,
}

impl ConvAct {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamSet,
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        Self {
            conv: Conv::new(ps, rng, name, c_in, c_out, k, stride, pad, PRELU_INIT),
            act: PRelu::new(ps, &format!("{name}.act")),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let y = self.conv.forward(g, p, x);
        self.act.forward(g, p, y)
    }
}

/// Transposed convolution followed by a Parametric ReLU.
#[derive(Clone, Copy, Debug)]
pub struct ConvTAct {
    pub conv: ConvTranspose,
    pub act: PRelu,
}

impl ConvTAct {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamSet,
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        Self {
            conv: ConvTranspose::new(ps, rng, name, c_in, c_out, k, stride, pad, PRELU_INIT),
            act: PRelu::new(ps, &format!("{name}.act")),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let y = self.conv.forward(g, p, x);
        self.act.forward(g, p, y)
    }
}

/// `x + act(conv(act(conv(x))))` with 3×3 stride-1 convolutions.
///
/// The second convolution starts at a tenth of its Kaiming scale so that a
/// deep stack of blocks begins close to the identity.
#[derive(Clone, Copy, Debug)]
pub struct ResBlock {
    pub first: ConvAct,
    pub second: ConvAct,
}

impl ResBlock {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamSet, rng: &mut R, name: &str, channels: usize) -> Self {
        let first = ConvAct::new(ps, rng, &format!("{name}.conv1"), channels, channels, 3, 1, 1);
        let second = ConvAct::new(ps, rng, &format!("{name}.conv2"), channels, channels, 3, 1, 1);
        for v in ps.get_mut(second.conv.weight).data_mut() {
            *v *= 0.1;
        }
        Self { first, second }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let y = self.first.forward(g, p, x);
        let y = self.second.forward(g, p, y);
        g.add(x, y)
    }
}
