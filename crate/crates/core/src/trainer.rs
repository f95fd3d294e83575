//! Alternating adversarial optimization of generator and discriminator.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::{Discriminator, DiscriminatorConfig};
use crate::error::{Error, Result};
use crate::feature::FeatureExtractor;
use crate::generator::{Generator, GeneratorConfig};
use crate::graph::{Graph, Var};
use crate::params::Bound;
use crate::losses::{discriminator_loss, mean_breakdown, record_generator_loss, ActiveTerms, LossBreakdown, LossWeights};
use crate::optim::{round_params_f32, Adam, AdamConfig};
use crate::pipeline::ClipWindow;
use crate::tensor::Tensor;

/// The six loss configurations of the ablation lattice, from the L1
/// baseline to the full four-term objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AblationMode {
    L1Only,
    MseOnly,
    Adv,
    AdvMse,
    AdvMsePerc,
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 6] = [
        Self::L1Only,
        Self::MseOnly,
        Self::Adv,
        Self::AdvMse,
        Self::AdvMsePerc,
        Self::Full,
    ];

    pub fn active_terms(self) -> ActiveTerms {
        let t = |l1, mse, perceptual, adversarial, tv| ActiveTerms {
            l1,
            mse,
            perceptual,
            adversarial,
            tv,
        };
        match self {
            Self::L1Only => t(true, false, false, false, false),
            Self::MseOnly => t(false, true, false, false, false),
            Self::Adv => t(false, false, false, true, false),
            Self::AdvMse => t(false, true, false, true, false),
            Self::AdvMsePerc => t(false, true, true, true, false),
            Self::Full => ActiveTerms::FULL,
        }
    }

    /// Whether the discriminator takes part in training.
    pub fn uses_discriminator(self) -> bool {
        self.active_terms().adversarial
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::L1Only => "l1_only",
            Self::MseOnly => "mse_only",
            Self::Adv => "adv",
            Self::AdvMse => "adv_mse",
            Self::AdvMsePerc => "adv_mse_perc",
            Self::Full => "full",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::L1Only => "generator only, L1 loss",
            Self::MseOnly => "generator only, MSE loss",
            Self::Adv => "generator + discriminator, adversarial loss",
            Self::AdvMse => "generator + discriminator, adversarial + MSE",
            Self::AdvMsePerc => "generator + discriminator, adversarial + MSE + perceptual",
            Self::Full => "generator + discriminator, adversarial + MSE + perceptual + TV",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || format!("{m:?}").eq_ignore_ascii_case(s))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub batch_size: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub ablation_mode: AblationMode,
    /// Save a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: u64,
    /// Optional square LR patch size cropped from each window.
    pub patch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            adam_betas: (0.9, 0.999),
            batch_size: 2,
            max_steps: 1000,
            seed: 0,
            loss_weights: LossWeights::default(),
            ablation_mode: AblationMode::Full,
            checkpoint_every: 100,
            patch_size: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0 and batch_size >= 1".into()));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::InvalidConfig("adam betas must lie in [0, 1)".into()));
        }
        if self.patch_size == Some(0) {
            return Err(Error::InvalidConfig("patch_size must be >= 1".into()));
        }
        self.loss_weights.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: 1e-8,
        }
    }
}

/// Everything mutated by training.
pub struct TrainState {
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub extractor: FeatureExtractor,
    pub g_opt: Adam,
    pub d_opt: Adam,
    pub step: u64,
}

/// Derive an independent stream seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl TrainState {
    pub fn new(
        gen_config: GeneratorConfig,
        disc_config: DiscriminatorConfig,
        extractor: FeatureExtractor,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut generator = Generator::new(gen_config, derive_seed(config.seed, 1))?;
        let mut discriminator = Discriminator::new(disc_config, derive_seed(config.seed, 2))?;
        round_params_f32(generator.params_mut());
        round_params_f32(discriminator.params_mut());
        let g_opt = Adam::new(config.adam(), generator.params(), true);
        let d_opt = Adam::new(config.adam(), discriminator.params(), true);
        Ok(Self {
            config,
            generator,
            discriminator,
            extractor,
            g_opt,
            d_opt,
            step: 0,
        })
    }
}

/// Losses reported by one [`train_step`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Step number after the update (1-based).
    pub step: u64,
    pub breakdown: LossBreakdown,
    /// Mean discriminator loss; `None` when the discriminator is unused.
    pub d_loss: Option<f64>,
}

fn accumulate(acc: &mut Option<Vec<Tensor>>, grads: Vec<Tensor>, k: f64) {
    match acc {
        None => *acc = Some(grads.into_iter().map(|g| g.map(|v| k * v)).collect()),
        Some(a) => {
            for (ai, gi) in a.iter_mut().zip(&grads) {
                ai.scale_add_assign(k, gi);
            }
        }
    }
}

fn non_finite(state: &TrainState, what: &str, index: usize) -> Error {
    Error::NonFiniteLoss(format!(
        "{what} at step {} for batch window {index}",
        state.step + 1
    ))
}

/// Recorded generator passes for one batch, shared by both updates.
pub struct BatchForward {
    passes: Vec<(Graph, Bound, Var, Var)>,
}

impl BatchForward {
    pub fn len(&self) -> usize {
        self.passes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passes.is_empty()
    }

    /// SR output of window `i`.
    pub fn sr(&self, i: usize) -> &Tensor {
        let (g, _, sr, _) = &self.passes[i];
        g.value(*sr)
    }
}

/// Run the generator on every window of `batch`.
pub fn forward_batch(state: &TrainState, batch: &[ClipWindow]) -> Result<BatchForward> {
    if batch.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut passes = Vec::with_capacity(batch.len());
    for (i, w) in batch.iter().enumerate() {
        let hr = w
            .target_hr
            .as_ref()
            .ok_or_else(|| Error::DimensionMismatch(format!("batch window {i} has no HR target")))?;
        let mut g = Graph::new();
        let gp = state.generator.params().bind(&mut g, true);
        let sr = state.generator.forward_graph(&mut g, &gp, w)?;
        let hr = g.constant(hr.tensor().clone());
        passes.push((g, gp, sr, hr));
    }
    Ok(BatchForward { passes })
}

/// One discriminator step on the batch mean of `1 − D(HR) + D(SR)`, with
/// the SR frames treated as constants. Returns the mean loss before the
/// update.
pub fn discriminator_update(state: &mut TrainState, fwd: &BatchForward) -> Result<f64> {
    let k = 1.0 / fwd.len() as f64;
    let mut acc = None;
    let mut total = 0.0;
    for (i, (g, _, sr, hr)) in fwd.passes.iter().enumerate() {
        let mut dg = Graph::new();
        let dp = state.discriminator.params().bind(&mut dg, true);
        let real = dg.constant(g.value(*hr).clone());
        let fake = dg.constant(g.value(*sr).clone());
        let p_real = state.discriminator.forward_graph(&mut dg, &dp, real)?;
        let p_fake = state.discriminator.forward_graph(&mut dg, &dp, fake)?;
        let l = dg.weighted_sum(&[(p_real, -1.0), (p_fake, 1.0)]);
        let value = discriminator_loss(dg.value(p_real).item(), dg.value(p_fake).item());
        if !value.is_finite() {
            return Err(non_finite(state, "discriminator loss", i));
        }
        total += value;
        let grads = dg.backward(l);
        accumulate(&mut acc, state.discriminator.params().gradients(&dp, &grads), k);
    }
    let grads = acc.expect("non-empty batch");
    state.d_opt.step(state.discriminator.params_mut(), &grads)?;
    Ok(total * k)
}

/// One generator step on the batch mean of the weighted objective, with
/// the discriminator frozen. Returns the mean breakdown before the update.
pub fn generator_update(state: &mut TrainState, fwd: BatchForward) -> Result<LossBreakdown> {
    let active = state.config.ablation_mode.active_terms();
    let weights = state.config.loss_weights;
    let k = 1.0 / fwd.len() as f64;
    let mut acc = None;
    let mut breakdowns = Vec::with_capacity(fwd.len());
    for (i, (mut g, gp, sr, hr)) in fwd.passes.into_iter().enumerate() {
        let d_prob = if active.adversarial {
            let dp = state.discriminator.params().bind(&mut g, false);
            Some(state.discriminator.forward_graph(&mut g, &dp, sr)?)
        } else {
            None
        };
        let rec = record_generator_loss(&mut g, sr, hr, d_prob, &state.extractor, &weights, &active);
        if !rec.breakdown.is_finite() {
            return Err(non_finite(state, "generator loss", i));
        }
        breakdowns.push(rec.breakdown);
        let grads = g.backward(rec.total);
        let gg = state.generator.params().gradients(&gp, &grads);
        if gg.iter().any(|t| !t.all_finite()) {
            return Err(non_finite(state, "generator gradient", i));
        }
        accumulate(&mut acc, gg, k);
    }
    let grads = acc.expect("non-empty batch");
    state.g_opt.step(state.generator.params_mut(), &grads)?;
    mean_breakdown(&breakdowns)
}

/// One discriminator update (when the mode uses it) followed by one
/// generator update, each minimizing its loss averaged over `batch`.
pub fn train_step(state: &mut TrainState, batch: &[ClipWindow]) -> Result<StepReport> {
    let fwd = forward_batch(state, batch)?;
    let d_loss = if state.config.ablation_mode.uses_discriminator() {
        Some(discriminator_update(state, &fwd)?)
    } else {
        None
    };
    let breakdown = generator_update(state, fwd)?;
    state.step += 1;
    Ok(StepReport {
        step: state.step,
        breakdown,
        d_loss,
    })
}

/// Window indices for `step`: epochs are seeded permutations of all
/// windows, consumed `batch_size` at a time. Pure in its arguments, so a
/// resumed run draws the same batches.
pub fn batch_indices(seed: u64, step: u64, batch_size: usize, n_windows: usize) -> Vec<usize> {
    assert!(n_windows > 0);
    let start = step as usize * batch_size;
    (start..start + batch_size)
        .map(|pos| {
            let epoch = (pos / n_windows) as u64;
            let mut perm: Vec<usize> = (0..n_windows).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x1000 + epoch));
            perm.shuffle(&mut rng);
            perm[pos % n_windows]
        })
        .collect()
}
