//! Generator and discriminator objectives.
//!
//! Per frame, the generator minimizes
//! `α·MSE + β·Perceptual + γ·Adversarial + δ·TV` and the discriminator
//! minimizes `1 − D(HR) + D(SR)`; sequences average the per-frame values.
//! MSE and perceptual terms are means over every element (width, height
//! and channels). TV sums per-channel isotropic variation and divides by
//! `W·H`.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::discriminator::PROB_EPS;
use crate::error::{Error, Result};
use crate::feature::FeatureExtractor;
use crate::graph::{self, Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 6e-3,
            gamma: 1e-3,
            delta: 2e-8,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.alpha, self.beta, self.gamma, self.delta]
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::InvalidConfig(format!("loss weights must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// Which generator loss terms are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveTerms {
    /// L1 pixel loss in place of MSE, weighted by `alpha`.
    pub l1: bool,
    pub mse: bool,
    pub perceptual: bool,
    pub adversarial: bool,
    pub tv: bool,
}

impl ActiveTerms {
    pub const FULL: Self = Self {
        l1: false,
        mse: true,
        perceptual: true,
        adversarial: true,
        tv: true,
    };

    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (on, name) in [
            (self.l1, "l1"),
            (self.mse, "mse"),
            (self.perceptual, "perceptual"),
            (self.adversarial, "adversarial"),
            (self.tv, "tv"),
        ] {
            if on {
                v.push(name);
            }
        }
        v
    }
}

/// Loss components of one frame or an averaged sequence. Inactive
/// components are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub mse: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    pub tv: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Components with `total` filled in from the weights.
    pub fn weighted(l1: f64, mse: f64, perceptual: f64, adversarial: f64, tv: f64, w: &LossWeights) -> Self {
        Self {
            l1,
            mse,
            perceptual,
            adversarial,
            tv,
            total: w.alpha * (l1 + mse) + w.beta * perceptual + w.gamma * adversarial + w.delta * tv,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.l1, self.mse, self.perceptual, self.adversarial, self.tv, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn mse_loss(sr: &Tensor, hr: &Tensor) -> Result<f64> {
    same_shape(sr, hr)?;
    let s: f64 = sr.data().iter().zip(hr.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / sr.len() as f64)
}

pub fn l1_loss(sr: &Tensor, hr: &Tensor) -> Result<f64> {
    same_shape(sr, hr)?;
    let s: f64 = sr.data().iter().zip(hr.data()).map(|(a, b)| libm::fabs(a - b)).sum();
    Ok(s / sr.len() as f64)
}

pub fn perceptual_loss(sr: &Tensor, hr: &Tensor, fx: &FeatureExtractor) -> Result<f64> {
    same_shape(sr, hr)?;
    let mut g = Graph::new();
    let (s, h) = (g.constant(sr.clone()), g.constant(hr.clone()));
    let l = record_perceptual(&mut g, s, h, fx);
    Ok(g.value(l).item())
}

/// `-ln(p)` with `p` clamped into `[ε, 1 − ε]`.
pub fn adversarial_loss(d_prob: f64) -> f64 {
    -libm::log(d_prob.clamp(PROB_EPS, 1.0 - PROB_EPS))
}

pub fn tv_loss(sr: &Tensor) -> f64 {
    graph::tv_value(sr)
}

/// All four weighted terms for one frame.
pub fn generator_loss(sr: &Tensor, hr: &Tensor, d_prob: f64, fx: &FeatureExtractor, w: &LossWeights) -> Result<LossBreakdown> {
    Ok(LossBreakdown::weighted(
        0.0,
        mse_loss(sr, hr)?,
        perceptual_loss(sr, hr, fx)?,
        adversarial_loss(d_prob),
        tv_loss(sr),
        w,
    ))
}

pub fn discriminator_loss(d_hr: f64, d_sr: f64) -> f64 {
    1.0 - d_hr + d_sr
}

/// Arithmetic mean of per-frame losses.
pub fn sequence_loss(per_frame: &[f64]) -> Result<f64> {
    if per_frame.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

/// Component-wise mean of breakdowns.
pub fn mean_breakdown(items: &[LossBreakdown]) -> Result<LossBreakdown> {
    let col = |f: fn(&LossBreakdown) -> f64| -> Result<f64> {
        sequence_loss(&items.iter().map(f).collect::<Vec<_>>())
    };
    Ok(LossBreakdown {
        l1: col(|b| b.l1)?,
        mse: col(|b| b.mse)?,
        perceptual: col(|b| b.perceptual)?,
        adversarial: col(|b| b.adversarial)?,
        tv: col(|b| b.tv)?,
        total: col(|b| b.total)?,
    })
}

pub fn record_perceptual(g: &mut Graph, sr: Var, hr: Var, fx: &FeatureExtractor) -> Var {
    let fs = fx.forward_graph(g, sr);
    let fh = fx.forward_graph(g, hr);
    g.mean_squared_diff(fs, fh)
}

/// Graph form of the generator objective. `d_prob` must be present when
/// the adversarial term is active.
pub struct RecordedLoss {
    pub total: Var,
    pub breakdown: LossBreakdown,
}

pub fn record_generator_loss(
    g: &mut Graph,
    sr: Var,
    hr: Var,
    d_prob: Option<Var>,
    fx: &FeatureExtractor,
    w: &LossWeights,
    active: &ActiveTerms,
) -> RecordedLoss {
    let mut terms = Vec::new();
    let value = |g: &Graph, v: Var| g.value(v).item();
    let (mut l1, mut mse, mut perc, mut adv, mut tv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    if active.l1 {
        let v = g.mean_abs_diff(sr, hr);
        l1 = value(g, v);
        terms.push((v, w.alpha));
    }
    if active.mse {
        let v = g.mean_squared_diff(sr, hr);
        mse = value(g, v);
        terms.push((v, w.alpha));
    }
    if active.perceptual {
        let v = record_perceptual(g, sr, hr, fx);
        perc = value(g, v);
        terms.push((v, w.beta));
    }
    if active.adversarial {
        let p = d_prob.expect("adversarial term needs a discriminator output");
        let v = g.neg_log(p);
        adv = value(g, v);
        terms.push((v, w.gamma));
    }
    if active.tv {
        let v = g.total_variation(sr);
        tv = value(g, v);
        terms.push((v, w.delta));
    }
    let total = g.weighted_sum(&terms);
    let mut breakdown = LossBreakdown::weighted(l1, mse, perc, adv, tv, w);
    breakdown.total = g.value(total).item();
    RecordedLoss { total, breakdown }
}
