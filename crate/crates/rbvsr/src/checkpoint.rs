//! Checkpoint container.
//!
//! Layout: magic `ISBC`, `u32` format version, `u64` length and bytes of a
//! JSON header (configs, step, RNG state), `u32` array count, then for
//! every array in sorted name order: `u32` name length, UTF-8 name, `u32`
//! rank, `u32` dimensions, `u64` element count and little-endian `f32`
//! values. Every integer is little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rbvsr_core::discriminator::DiscriminatorConfig;
use rbvsr_core::feature::FeatureExtractor;
use rbvsr_core::generator::{Generator, GeneratorConfig};
use rbvsr_core::optim::Adam;
use rbvsr_core::params::ParamSet;
use rbvsr_core::trainer::{TrainConfig, TrainState};
use rbvsr_core::{Error as CoreError, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ISBC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    pub step: u64,
    pub generator_adam_steps: u64,
    pub discriminator_adam_steps: u64,
    /// Opaque RNG state, hex encoded.
    pub rng_state: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedArray {
    fn from_tensor(t: &Tensor) -> Self {
        Self {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| v as f32).collect(),
        }
    }

    fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&self.shape, self.data.iter().map(|&v| v as f64).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointBundle {
    pub format_version: u32,
    pub header: CheckpointHeader,
    pub arrays: BTreeMap<String, NamedArray>,
}

const GEN: &str = "generator/";
const DISC: &str = "discriminator/";

fn put_params(arrays: &mut BTreeMap<String, NamedArray>, prefix: &str, ps: &ParamSet) {
    for (name, t) in ps.iter() {
        arrays.insert(format!("{prefix}{name}"), NamedArray::from_tensor(t));
    }
}

fn put_moments(arrays: &mut BTreeMap<String, NamedArray>, prefix: &str, ps: &ParamSet, opt: &Adam) {
    for (i, (name, _)) in ps.iter().enumerate() {
        arrays.insert(format!("optimizer/{prefix}m/{name}"), NamedArray::from_tensor(&opt.m[i]));
        arrays.insert(format!("optimizer/{prefix}v/{name}"), NamedArray::from_tensor(&opt.v[i]));
    }
}

fn take_prefixed(arrays: &BTreeMap<String, NamedArray>, prefix: &str) -> BTreeMap<String, Tensor> {
    arrays
        .iter()
        .filter_map(|(k, a)| k.strip_prefix(prefix).map(|n| (n.to_string(), a.to_tensor())))
        .filter(|(n, _)| !n.contains('/'))
        .collect()
}

fn load_moments(arrays: &BTreeMap<String, NamedArray>, prefix: &str, ps: &ParamSet, opt: &mut Adam) -> Result<()> {
    for (i, (name, t)) in ps.iter().enumerate() {
        for (which, slot) in [("m", &mut opt.m[i]), ("v", &mut opt.v[i])] {
            let key = format!("optimizer/{prefix}{which}/{name}");
            let a = arrays
                .get(&key)
                .ok_or_else(|| CoreError::ShapeMismatch(format!("checkpoint lacks {key}")))?;
            if a.shape != t.shape() {
                return Err(CoreError::ShapeMismatch(format!("{key}: {:?} vs {:?}", a.shape, t.shape())).into());
            }
            *slot = a.to_tensor();
        }
    }
    Ok(())
}

/// RNG state for a run: the seed followed by the step, both little-endian.
pub fn rng_state(seed: u64, step: u64) -> String {
    seed.to_le_bytes()
        .iter()
        .chain(&step.to_le_bytes())
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl CheckpointBundle {
    pub fn from_state(state: &TrainState) -> Self {
        let mut arrays = BTreeMap::new();
        let (g, d) = (state.generator.params(), state.discriminator.params());
        put_params(&mut arrays, GEN, g);
        put_params(&mut arrays, DISC, d);
        put_moments(&mut arrays, GEN, g, &state.g_opt);
        put_moments(&mut arrays, DISC, d, &state.d_opt);
        Self {
            format_version: FORMAT_VERSION,
            header: CheckpointHeader {
                generator: state.generator.config().clone(),
                discriminator: state.discriminator.config().clone(),
                train: state.config.clone(),
                step: state.step,
                generator_adam_steps: state.g_opt.steps,
                discriminator_adam_steps: state.d_opt.steps,
                rng_state: rng_state(state.config.seed, state.step),
            },
            arrays,
        }
    }

    /// Overwrite `state`'s parameters, optimizer moments and step. Fails
    /// with `ShapeMismatch` when the stored arrays do not fit its networks.
    pub fn load_into(&self, state: &mut TrainState) -> Result<()> {
        state.generator.params_mut().load_named(&take_prefixed(&self.arrays, GEN))?;
        state.discriminator.params_mut().load_named(&take_prefixed(&self.arrays, DISC))?;
        load_moments(&self.arrays, GEN, state.generator.params(), &mut state.g_opt)?;
        load_moments(&self.arrays, DISC, state.discriminator.params(), &mut state.d_opt)?;
        state.g_opt.steps = self.header.generator_adam_steps;
        state.d_opt.steps = self.header.discriminator_adam_steps;
        state.step = self.header.step;
        Ok(())
    }

    /// The generator alone, for inference.
    pub fn generator(&self) -> Result<Generator> {
        let mut g = Generator::new(self.header.generator.clone(), 0)?;
        g.params_mut().load_named(&take_prefixed(&self.arrays, GEN))?;
        Ok(g)
    }

    /// Rebuild the full training state described by the header.
    pub fn restore(&self, extractor: FeatureExtractor) -> Result<TrainState> {
        let h = &self.header;
        let mut state = TrainState::new(h.generator.clone(), h.discriminator.clone(), extractor, h.train.clone())?;
        self.load_into(&mut state)?;
        Ok(state)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.header)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, a) in &self.arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
            for &d in &a.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&(a.data.len() as u64).to_le_bytes());
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::corrupt(path, "not an ISBC checkpoint"));
        }
        let format_version = r.u32()?;
        if format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: format_version,
                expected: FORMAT_VERSION,
            });
        }
        let json_len = r.u64()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(json_len)?)?;
        let count = r.u32()?;
        let mut arrays = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::corrupt(path, "array name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = r.u64()? as usize;
            if shape.iter().product::<usize>() != n {
                return Err(Error::corrupt(path, format!("{name}: shape {shape:?} holds {n} values")));
            }
            let data = r
                .take(4 * n)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.insert(name, NamedArray { shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::corrupt(path, "trailing bytes"));
        }
        Ok(Self {
            format_version,
            header,
            arrays,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::corrupt(self.path, "truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(bundle: &CheckpointBundle, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    // write then rename so a crash never leaves a truncated checkpoint
    let tmp = path.with_extension("isbc.tmp");
    fs::write(&tmp, bundle.to_bytes()?).map_err(Error::io(&tmp))?;
    fs::rename(&tmp, path).map_err(Error::io(path))
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointBundle> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    CheckpointBundle::from_bytes(&bytes, path)
}
