//! Frozen feature extractors for the perceptual loss.
//!
//! [`FeatureExtractor::Conv`] is a VGG-style stack: stages of 3×3
//! convolutions with ReLU, separated by 2×2 max pooling. The layer selector
//! `(i, j)` picks the output of the `j`-th convolution (after activation)
//! in stage `i`, i.e. before the `i`-th pooling layer; both are 1-based.
//! Parameters are always bound as graph constants, so training never
//! updates them.

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
use crate::params::ParamSet;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    /// Output channels of every convolution, grouped by stage.
    pub stages: Vec<Vec<usize>>,
    pub layer_selector: (usize, usize),
    /// Seed for the random fixed weights used when no weight file is given.
    pub seed: u64,
}

impl ExtractorConfig {
    /// VGG-19 geometry, selecting the deepest pre-pool feature `(5, 4)`.
    pub fn vgg19() -> Self {
        Self {
            stages: vec![
                vec![64, 64],
                vec![128, 128],
                vec![256; 4],
                vec![512; 4],
                vec![512; 4],
            ],
            layer_selector: (5, 4),
            seed: 0,
        }
    }

    /// Two small stages with fixed random weights.
    pub fn tiny() -> Self {
        Self {
            stages: vec![vec![8, 8], vec![16, 16]],
            layer_selector: (2, 2),
            seed: 0x5eed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (i, j) = self.layer_selector;
        if i == 0 || i > self.stages.len() || j == 0 || j > self.stages[i - 1].len() {
            return Err(Error::InvalidConfig(format!(
                "layer selector ({i}, {j}) outside extractor with stages {:?}",
                self.stages.iter().map(Vec::len).collect::<Vec<_>>()
            )));
        }
        if self.stages.iter().flatten().any(|&c| c == 0) {
            return Err(Error::InvalidConfig("zero-width extractor layer".into()));
        }
        Ok(())
    }
}

pub struct ConvExtractor {
    config: ExtractorConfig,
    params: ParamSet,
    convs: Vec<Vec<Conv>>,
}

impl ConvExtractor {
    pub fn new(config: ExtractorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut ps = ParamSet::new();
        let mut c_in = CHANNELS;
        let (sel_i, sel_j) = config.layer_selector;
        let mut convs = Vec::new();
        // layers past the selected one never run, so they are not built
        for (si, stage) in config.stages.iter().enumerate().take(sel_i) {
            let mut layers = Vec::new();
            let depth = if si + 1 == sel_i { sel_j } else { stage.len() };
            for (ci, &c) in stage.iter().enumerate().take(depth) {
                let name = format!("stage{}.conv{}", si + 1, ci + 1);
                layers.push(Conv::new(&mut ps, &mut rng, &name, c_in, c, 3, 1, 1, 0.0));
                c_in = c;
            }
            convs.push(layers);
        }
        Ok(Self {
            config,
            params: ps,
            convs,
        })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

pub enum FeatureExtractor {
    /// Features are the pixels themselves.
    Identity,
    Conv(ConvExtractor),
}

impl FeatureExtractor {
    pub fn tiny() -> Self {
        Self::Conv(ConvExtractor::new(ExtractorConfig::tiny()).expect("tiny extractor config is valid"))
    }

    /// Record feature extraction for `x` into `g`.
    pub fn forward_graph(&self, g: &mut Graph, x: Var) -> Var {
        match self {
            Self::Identity => x,
            Self::Conv(ex) => {
                let p = ex.params.bind(g, false);
                let mut y = x;
                let n_stages = ex.convs.len();
                for (si, stage) in ex.convs.iter().enumerate() {
                    for conv in stage {
                        y = conv.forward(g, &p, y);
                        y = g.relu(y);
                    }
                    if si + 1 < n_stages {
                        y = g.max_pool2(y);
                    }
                }
                y
            }
        }
    }

    /// Smallest input side the extractor accepts.
    pub fn min_input(&self) -> usize {
        match self {
            Self::Identity => 1,
            Self::Conv(ex) => 1 << (ex.convs.len() - 1),
        }
    }
}
