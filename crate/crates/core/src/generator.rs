//! Recurrent back-projection generator.
//!
//! For a window with target `LR_t` and neighbors `LR_{t-1} .. LR_{t-n}`:
//!
//! 1. `extract_features` lifts every LR frame to `feat_channels` maps.
//! 2. Step `k` runs the SISR path (transposed-conv up, conv down,
//!    transposed-conv up; 8×8 kernels, stride 4, pad 2) on the carried LR
//!    state, and the MISR path (target features ‖ neighbor features ‖ flow,
//!    through residual tiles, then 4× up) on neighbor `k`.
//! 3. The projection module back-projects the SISR/MISR residual, appends
//!    the fused HR map to the hidden state, and decodes the next LR state.
//! 4. All `n` HR maps are concatenated and reconstructed to RGB by a 3×3
//!    convolution. The output is not clamped.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowMap;
use crate::frame::{Frame, CHANNELS};
use crate::graph::{Graph, Var};
use crate::nn::{Conv, ConvAct, ConvTAct, ResBlock};
use crate::params::{Bound, ParamSet};
use crate::pipeline::ClipWindow;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub scale: usize,
    pub n_neighbors: usize,
    pub feat_channels: usize,
    pub base_channels: usize,
    pub sisr_kernel: usize,
    pub sisr_stride: usize,
    pub sisr_pad: usize,
    pub misr_tiles: usize,
    pub misr_blocks_per_tile: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl GeneratorConfig {
    /// Full-width profile: 64 channels, 6 neighbors.
    pub fn full() -> Self {
        Self {
            scale: 4,
            n_neighbors: 6,
            feat_channels: 64,
            base_channels: 64,
            sisr_kernel: 8,
            sisr_stride: 4,
            sisr_pad: 2,
            misr_tiles: 3,
            misr_blocks_per_tile: 5,
        }
    }

    /// Desk-scale profile: 4 channels, 2 neighbors.
    pub fn tiny() -> Self {
        Self {
            n_neighbors: 2,
            feat_channels: 4,
            base_channels: 4,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("generator: {m}")));
        if self.scale != 4 || self.sisr_stride != self.scale {
            return bad("scale and sisr_stride must both be 4");
        }
        if self.sisr_kernel < self.sisr_stride || self.sisr_kernel - self.sisr_stride != 2 * self.sisr_pad {
            return bad("sisr_kernel - sisr_stride must equal 2 * sisr_pad");
        }
        if self.n_neighbors == 0 || self.feat_channels == 0 || self.base_channels == 0 {
            return bad("n_neighbors and channel counts must be >= 1");
        }
        if self.misr_tiles == 0 || self.misr_blocks_per_tile == 0 {
            return bad("MISR needs at least one tile of one block");
        }
        Ok(())
    }

    /// Closed-form number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let (f, b, k) = (self.feat_channels, self.base_channels, self.sisr_kernel);
        let conv = |ci: usize, co: usize, k: usize| ci * co * k * k + co;
        let act = 1;
        let res = 2 * (conv(b, b, 3) + act);
        let features = conv(CHANNELS, f, 3) + act;
        let sisr = conv(f, b, k) + conv(b, b, k) + conv(b, b, k) + 3 * act;
        let blocks = self.misr_tiles * self.misr_blocks_per_tile;
        let misr = conv(2 * f + 2, b, 3) + act + blocks * res + conv(b, b, k) + act;
        let projection = conv(b, b, k) + act + res + conv(b, b, k) + act + conv(b, f, k) + act;
        let recon = conv(self.n_neighbors * b, CHANNELS, 3);
        features + sisr + misr + projection + recon
    }
}

/// Per-step HR feature maps of one forward pass.
#[derive(Clone, Debug, Default)]
pub struct HiddenState {
    pub hr_features: Vec<Var>,
}

struct Layers {
    features: ConvAct,
    sisr_up1: ConvTAct,
    sisr_down: ConvAct,
    sisr_up2: ConvTAct,
    misr_entry: ConvAct,
    misr_blocks: Vec<ResBlock>,
    misr_up: ConvTAct,
    proj_down: ConvAct,
    proj_refine: ResBlock,
    proj_up: ConvTAct,
    proj_decode: ConvAct,
    recon: Conv,
}

pub struct Generator {
    config: GeneratorConfig,
    params: ParamSet,
    layers: Layers,
}

impl Generator {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let (f, b) = (config.feat_channels, config.base_channels);
        let (k, s, p) = (config.sisr_kernel, config.sisr_stride, config.sisr_pad);
        let r = &mut rng;
        let features = ConvAct::new(&mut ps, r, "features", CHANNELS, f, 3, 1, 1);
        let sisr_up1 = ConvTAct::new(&mut ps, r, "sisr.up1", f, b, k, s, p);
        let sisr_down = ConvAct::new(&mut ps, r, "sisr.down", b, b, k, s, p);
        let sisr_up2 = ConvTAct::new(&mut ps, r, "sisr.up2", b, b, k, s, p);
        let misr_entry = ConvAct::new(&mut ps, r, "misr.entry", 2 * f + 2, b, 3, 1, 1);
        let mut misr_blocks = Vec::new();
        for tile in 0..config.misr_tiles {
            for block in 0..config.misr_blocks_per_tile {
                misr_blocks.push(ResBlock::new(&mut ps, r, &format!("misr.tile{tile}.block{block}"), b));
            }
        }
        let misr_up = ConvTAct::new(&mut ps, r, "misr.up", b, b, k, s, p);
        let proj_down = ConvAct::new(&mut ps, r, "projection.down", b, b, k, s, p);
        let proj_refine = ResBlock::new(&mut ps, r, "projection.refine", b);
        let proj_up = ConvTAct::new(&mut ps, r, "projection.up", b, b, k, s, p);
        let proj_decode = ConvAct::new(&mut ps, r, "projection.decode", b, f, k, s, p);
        let recon = Conv::new(
            &mut ps,
            r,
            "reconstruction",
            config.n_neighbors * b,
            CHANNELS,
            3,
            1,
            1,
            1.0,
        );
        let layers = Layers {
            features,
            sisr_up1,
            sisr_down,
            sisr_up2,
            misr_entry,
            misr_blocks,
            misr_up,
            proj_down,
            proj_refine,
            proj_up,
            proj_decode,
            recon,
        };
        debug_assert_eq!(ps.count(), config.param_count());
        Ok(Self {
            config,
            params: ps,
            layers,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Ids of the parameters forming the projection module's residual
    /// branch (down, refine, up).
    pub fn residual_branch_params(&self) -> Vec<crate::params::ParamId> {
        let l = &self.layers;
        let mut ids = Vec::new();
        for c in [l.proj_down.conv, l.proj_refine.first.conv, l.proj_refine.second.conv] {
            ids.extend([c.weight, c.bias]);
        }
        ids.extend([l.proj_up.conv.weight, l.proj_up.conv.bias]);
        ids
    }

    /// Single 3×3 convolution plus PReLU; spatial size is preserved.
    pub fn extract_features(&self, g: &mut Graph, p: &Bound, lr: Var) -> Var {
        self.layers.features.forward(g, p, lr)
    }

    /// Up-down-up back-projection path, 4× spatial output.
    pub fn sisr_path(&self, g: &mut Graph, p: &Bound, features: Var) -> Var {
        let l = &self.layers;
        let x = l.sisr_up1.forward(g, p, features);
        let x = l.sisr_down.forward(g, p, x);
        l.sisr_up2.forward(g, p, x)
    }

    /// Flow-conditioned residual path, 4× spatial output.
    pub fn misr_path(&self, g: &mut Graph, p: &Bound, target_feat: Var, neighbor_lr: Var, flow: Var) -> Var {
        let l = &self.layers;
        let nf = self.extract_features(g, p, neighbor_lr);
        let x = g.concat(&[target_feat, nf, flow]);
        let mut x = l.misr_entry.forward(g, p, x);
        for block in &l.misr_blocks {
            x = block.forward(g, p, x);
        }
        l.misr_up.forward(g, p, x)
    }

    /// Residual block only, exposed for inspection.
    pub fn misr_block(&self, g: &mut Graph, p: &Bound, index: usize, x: Var) -> Var {
        self.layers.misr_blocks[index].forward(g, p, x)
    }

    /// Fuse SISR and MISR maps: back-project their residual onto the SISR
    /// map, append the result to `state`, and return the decoded LR state
    /// for the next step.
    pub fn projection_step(&self, g: &mut Graph, p: &Bound, state: &mut HiddenState, sisr_out: Var, misr_out: Var) -> Var {
        let l = &self.layers;
        let residual = g.sub(sisr_out, misr_out);
        let e = l.proj_down.forward(g, p, residual);
        let e = l.proj_refine.forward(g, p, e);
        let e = l.proj_up.forward(g, p, e);
        let fused = g.add(sisr_out, e);
        state.hr_features.push(fused);
        l.proj_decode.forward(g, p, fused)
    }

    /// Record a full forward pass for `window` into `g`; returns the SR
    /// output variable `[3, 4h, 4w]`.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bound, window: &ClipWindow) -> Result<Var> {
        if window.n() != self.config.n_neighbors {
            return Err(Error::ConfigMismatch(format!(
                "window has {} neighbors, generator expects {}",
                window.n(),
                self.config.n_neighbors
            )));
        }
        window.validate(self.config.scale)?;
        let target = g.constant(window.target_lr.tensor().clone());
        let target_feat = self.extract_features(g, p, target);
        let mut state = HiddenState::default();
        let mut lr_state = target_feat;
        for (neighbor, flow) in window.neighbors_lr.iter().zip(&window.flows) {
            let nb = g.constant(neighbor.tensor().clone());
            let fl = g.constant(flow.to_tensor());
            let sisr_out = self.sisr_path(g, p, lr_state);
            let misr_out = self.misr_path(g, p, target_feat, nb, fl);
            lr_state = self.projection_step(g, p, &mut state, sisr_out, misr_out);
        }
        let stacked = g.concat(&state.hr_features);
        Ok(self.layers.recon.forward(g, p, stacked))
    }

    /// Inference: the raw (unclamped) SR tensor.
    pub fn forward(&self, window: &ClipWindow) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let out = self.forward_graph(&mut g, &p, window)?;
        Ok(g.value(out).clone())
    }

    /// Inference clamped to a displayable frame.
    pub fn upscale(&self, window: &ClipWindow) -> Result<Frame> {
        Ok(Frame::from_tensor_clamped(self.forward(window)?))
    }
}

/// Convenience for tests and tools: a window with zero flow.
pub fn static_window(target: &Frame, neighbors: &[Frame], hr: Option<Frame>) -> ClipWindow {
    let (h, w) = target.dims();
    ClipWindow {
        target_lr: target.clone(),
        neighbors_lr: neighbors.to_vec(),
        flows: neighbors.iter().map(|_| FlowMap::zeros(h, w)).collect(),
        target_hr: hr,
    }
}
