//! Run configuration: every setting of a run in one serializable value,
//! stored as a flat JSON object with dotted keys such as
//! `"train.loss_weights.beta"`.
//!
//! Resolution order: profile defaults, then the config file, then
//! command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rbvsr_core::discriminator::DiscriminatorConfig;
use rbvsr_core::feature::{ConvExtractor, ExtractorConfig, FeatureExtractor};
use rbvsr_core::flow::FlowParams;
use rbvsr_core::generator::GeneratorConfig;
use rbvsr_core::trainer::TrainConfig;
use rbvsr_core::{Error as CoreError, Tensor};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 64-channel generator, 8-stage discriminator, VGG-19-shaped extractor.
    Full,
    /// 4-channel generator with 2 neighbors, 2-stage discriminator and a
    /// two-stage extractor, for desk-scale runs and tests.
    Tiny,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Some(Self::Full),
            "tiny" => Some(Self::Tiny),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    /// Frozen convolutional stack with seeded random weights, or weights
    /// read from `weights`.
    Conv,
    /// Pixels as features; perceptual loss reduces to MSE.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    pub kind: ExtractorKind,
    pub stages: Vec<Vec<usize>>,
    pub layer_selector: (usize, usize),
    pub seed: u64,
    /// Optional JSON file `{name: {"shape": [...], "data": [...]}}` with
    /// pretrained weights, e.g. `"stage1.conv1.weight"`.
    pub weights: Option<PathBuf>,
}

impl ExtractorSpec {
    fn from_config(c: ExtractorConfig) -> Self {
        Self {
            kind: ExtractorKind::Conv,
            stages: c.stages,
            layer_selector: c.layer_selector,
            seed: c.seed,
            weights: None,
        }
    }

    pub fn build(&self) -> Result<FeatureExtractor> {
        if self.kind == ExtractorKind::Identity {
            return Ok(FeatureExtractor::Identity);
        }
        let mut ex = ConvExtractor::new(ExtractorConfig {
            stages: self.stages.clone(),
            layer_selector: self.layer_selector,
            seed: self.seed,
        })?;
        if let Some(path) = &self.weights {
            #[derive(Deserialize)]
            struct Stored {
                shape: Vec<usize>,
                data: Vec<f64>,
            }
            let text = fs::read_to_string(path).map_err(Error::io(path))?;
            let stored: BTreeMap<String, Stored> = serde_json::from_str(&text)?;
            let named: BTreeMap<String, Tensor> = stored
                .into_iter()
                .filter(|(name, _)| ex.params().find(name).is_some())
                .map(|(name, s)| {
                    if s.shape.iter().product::<usize>() != s.data.len() {
                        return Err(CoreError::ShapeMismatch(format!("{name}: data does not fill shape")).into());
                    }
                    Ok((name, Tensor::from_vec(&s.shape, s.data)))
                })
                .collect::<Result<_>>()?;
            ex.params_mut().load_named(&named)?;
        }
        Ok(FeatureExtractor::Conv(ex))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Train / val / test fractions.
    pub split_ratios: (f64, f64, f64),
    pub split_seed: u64,
    /// Pixels ignored at each border by the metrics.
    pub crop_border: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            split_ratios: (0.8, 0.1, 0.1),
            split_seed: 42,
            crop_border: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    /// Raw corpus: one subdirectory of frames, or one video file, per clip.
    pub data_root: PathBuf,
    /// Output of `prepare`: `hr/`, `lr/`, `split.json`.
    pub prepared_root: PathBuf,
    /// Flow store; `<prepared_root>/flows` when empty.
    pub flow_root: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_root: "data/raw".into(),
            prepared_root: "data/prepared".into(),
            flow_root: PathBuf::new(),
            checkpoint_dir: "runs/checkpoints".into(),
            out_dir: "runs/out".into(),
        }
    }
}

impl Paths {
    pub fn flow_root(&self) -> PathBuf {
        if self.flow_root.as_os_str().is_empty() {
            self.prepared_root.join("flows")
        } else {
            self.flow_root.clone()
        }
    }

    pub fn hr_root(&self) -> PathBuf {
        self.prepared_root.join("hr")
    }

    pub fn lr_root(&self) -> PathBuf {
        self.prepared_root.join("lr")
    }

    pub fn split_manifest(&self) -> PathBuf {
        self.prepared_root.join("split.json")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub extractor: ExtractorSpec,
    pub train: TrainConfig,
    pub flow: FlowParams,
    pub data: DataConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (generator, discriminator, extractor) = match profile {
            Profile::Full => (
                GeneratorConfig::full(),
                DiscriminatorConfig::full(),
                ExtractorConfig::vgg19(),
            ),
            Profile::Tiny => (
                GeneratorConfig::tiny(),
                DiscriminatorConfig::tiny(),
                ExtractorConfig::tiny(),
            ),
        };
        Self {
            profile,
            generator,
            discriminator,
            extractor: ExtractorSpec::from_config(extractor),
            train: TrainConfig::default(),
            flow: FlowParams::default(),
            data: DataConfig::default(),
            paths: Paths::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.train.validate()?;
        self.flow.validate()?;
        Ok(())
    }

    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    pub fn to_flat_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_flat()).expect("config serializes")
    }

    /// Overlay dotted `keys` onto this config. Unknown keys are rejected.
    pub fn apply(&self, keys: &BTreeMap<String, Value>) -> Result<Self> {
        let mut flat = self.to_flat();
        for (k, v) in keys {
            if !flat.contains_key(k) && !flat.keys().any(|f| f.starts_with(&format!("{k}."))) {
                return Err(CoreError::InvalidConfig(format!("unknown config key {k:?}")).into());
            }
            // replacing a whole sub-object drops its old dotted children
            flat.retain(|f, _| !f.starts_with(&format!("{k}.")));
            flat.insert(k.clone(), v.clone());
        }
        let value = unflatten(&flat)?;
        let cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| CoreError::InvalidConfig(format!("config does not fit the schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolve a run config: the profile (explicit, else the file's
    /// `profile` key, else full) sets the defaults, then the file's keys,
    /// then `overrides` are applied.
    pub fn resolve(
        file: Option<&Path>,
        profile: Option<Profile>,
        overrides: &BTreeMap<String, Value>,
    ) -> Result<Self> {
        let file_keys = match file {
            Some(p) => read_flat(p)?,
            None => BTreeMap::new(),
        };
        let file_profile = match file_keys.get("profile") {
            Some(Value::String(s)) => Some(
                Profile::parse(s).ok_or_else(|| CoreError::InvalidConfig(format!("unknown profile {s:?}")))?,
            ),
            Some(other) => return Err(CoreError::InvalidConfig(format!("profile must be a string, got {other}")).into()),
            None => None,
        };
        let profile = profile.or(file_profile).unwrap_or(Profile::Full);
        let mut keys = file_keys;
        keys.insert("profile".into(), serde_json::to_value(profile)?);
        let base = RunConfig::for_profile(profile).apply(&keys)?;
        base.apply(overrides)
    }
}

pub fn read_flat(path: &Path) -> Result<BTreeMap<String, Value>> {
    let text = fs::read_to_string(path).map_err(|e| Error::UnreadableSource(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)?;
    let Value::Object(map) = value else {
        return Err(CoreError::InvalidConfig(format!("{}: expected a JSON object", path.display())).into());
    };
    // nested objects are accepted too and flattened
    let mut out = BTreeMap::new();
    flatten("", &Value::Object(map), &mut out);
    Ok(out)
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(map) if !map.is_empty() => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Result<Value> {
    let mut root = Map::new();
    for (key, v) in flat {
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut root;
        for p in &parts[..parts.len() - 1] {
            let entry = node.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
            node = entry
                .as_object_mut()
                .ok_or_else(|| CoreError::InvalidConfig(format!("config key {key:?} conflicts with a value")))?;
        }
        node.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    Ok(Value::Object(root))
}

/// Parse a `key=value` override; the value is JSON when it parses as
/// JSON and a plain string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CoreError::InvalidConfig(format!("override {s:?} is not key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}
