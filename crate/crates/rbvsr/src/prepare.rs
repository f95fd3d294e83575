//! Corpus preparation: ingest, LR/HR pairs, flows and the split manifest.

use std::fs;
use std::path::Path;

use rbvsr_core::pipeline::{make_pair, split_dataset, window_clip, Clip, ClipWindow, DatasetSplit};
use rbvsr_core::toy::toy_clip;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::extract::extract_frames;
use crate::flowstore::{precompute_flows, read_window_flows};
use crate::frames::{read_clip, read_clip_dir, write_clip, write_if_changed};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PrepareSummary {
    pub clips: Vec<String>,
    /// Files created or rewritten; zero on an up-to-date rerun.
    pub files_written: usize,
}

/// Clip sources under `data_root`: subdirectories of frames and video
/// files, in name order.
fn sources(data_root: &Path) -> Result<Vec<(String, std::path::PathBuf)>> {
    if !data_root.is_dir() {
        return Err(Error::UnreadableSource(format!("{}: data root does not exist", data_root.display())));
    }
    let entries = fs::read_dir(data_root).map_err(|e| Error::UnreadableSource(format!("{}: {e}", data_root.display())))?;
    let mut out: Vec<(String, std::path::PathBuf)> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')))
        .filter_map(|p| {
            let id = p.file_stem()?.to_str()?.to_string();
            Some((id, p))
        })
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::UnreadableSource(format!("{}: no clips found", data_root.display())));
    }
    Ok(out)
}

pub fn write_split(path: &Path, split: &DatasetSplit) -> Result<bool> {
    let mut text = serde_json::to_string_pretty(split)?;
    text.push('\n');
    write_if_changed(path, text.as_bytes())
}

pub fn read_split(path: &Path) -> Result<DatasetSplit> {
    let text = fs::read_to_string(path).map_err(|e| Error::UnreadableSource(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Prepare every clip of `paths.data_root`. Idempotent: a rerun on
/// unchanged input rewrites nothing.
pub fn prepare(cfg: &RunConfig) -> Result<PrepareSummary> {
    let paths = &cfg.paths;
    let scale = cfg.generator.scale;
    let mut written = 0;
    let mut ids = Vec::new();
    for (id, src) in sources(&paths.data_root)? {
        let clip = if src.is_dir() {
            read_clip_dir(&src, &id)?
        } else {
            extract_frames(&src, &paths.prepared_root.join("frames").join(&id))?
        };
        let pairs = clip
            .frames()
            .iter()
            .map(|f| make_pair(f, scale))
            .collect::<rbvsr_core::Result<Vec<_>>>()?;
        let (lr, hr): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let lr = Clip::new(id.clone(), src.display().to_string(), lr)?;
        let hr = Clip::new(id.clone(), src.display().to_string(), hr)?;
        written += write_clip(&paths.hr_root(), &hr)?;
        written += write_clip(&paths.lr_root(), &lr)?;
        // flows are estimated from the stored (8-bit) LR frames so that
        // they match what training later reads back
        let lr_stored = read_clip(&paths.lr_root(), &id)?;
        written += precompute_flows(&lr_stored, cfg.generator.n_neighbors, &cfg.flow, &paths.flow_root())?;
        ids.push(id);
    }
    let split = split_dataset(&ids, cfg.data.split_ratios, cfg.data.split_seed)?;
    written += write_split(&paths.split_manifest(), &split)? as usize;
    Ok(PrepareSummary {
        clips: ids,
        files_written: written,
    })
}

/// Write `clips` procedural HR clips as frame directories under `root`.
pub fn write_toy_corpus(root: &Path, seed: u64, clips: usize, frames: usize, size: usize) -> Result<usize> {
    let mut written = 0;
    for i in 0..clips {
        written += write_clip(root, &toy_clip(seed, i, frames, size, size)?)?;
    }
    Ok(written)
}

/// A prepared clip: LR and HR frames plus the stored flows of every window.
pub struct PreparedClip {
    pub lr: Clip,
    pub hr: Clip,
    pub flows: Vec<Vec<rbvsr_core::flow::FlowMap>>,
}

impl PreparedClip {
    pub fn load(cfg: &RunConfig, clip_id: &str) -> Result<Self> {
        let paths = &cfg.paths;
        let lr = read_clip(&paths.lr_root(), clip_id)?;
        let hr = read_clip(&paths.hr_root(), clip_id)?;
        let n = cfg.generator.n_neighbors;
        let flows = (0..lr.len())
            .map(|t| read_window_flows(&paths.flow_root(), clip_id, t, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lr, hr, flows })
    }

    pub fn windows(&self, n: usize) -> Result<Vec<ClipWindow>> {
        (0..self.lr.len())
            .map(|t| Ok(window_clip(&self.lr, t, n, self.flows[t].clone(), Some(&self.hr))?))
            .collect()
    }
}

/// Every window of the given clips, clip by clip in frame order.
pub fn load_windows(cfg: &RunConfig, clip_ids: &[String]) -> Result<Vec<ClipWindow>> {
    let mut out = Vec::new();
    for id in clip_ids {
        out.extend(PreparedClip::load(cfg, id)?.windows(cfg.generator.n_neighbors)?);
    }
    Ok(out)
}
