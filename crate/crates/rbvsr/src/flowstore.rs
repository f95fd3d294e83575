//! Binary flow files and the per-clip flow store.
//!
//! A file is the magic `FLO1`, little-endian `u32` height and width, then
//! `height × width` `f32` values of `u` followed by those of `v`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rbvsr_core::flow::{estimate_flow, FlowMap, FlowParams};
use rbvsr_core::pipeline::{neighbor_index, Clip};

use crate::error::{Error, Result};
use crate::frames::write_if_changed;
use crate::threads::with_pool;

pub const FLOW_MAGIC: &[u8; 4] = b"FLO1";

pub fn encode_flow(flow: &FlowMap) -> Vec<u8> {
    let (h, w) = flow.dims();
    let mut out = Vec::with_capacity(12 + 8 * h * w);
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for v in flow.u().iter().chain(flow.v()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flow(bytes: &[u8], path: &Path) -> Result<FlowMap> {
    if bytes.len() < 12 || &bytes[..4] != FLOW_MAGIC {
        return Err(Error::corrupt(path, "missing FLO1 header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (h, w) = (word(4), word(8));
    if bytes.len() != 12 + 8 * h * w {
        return Err(Error::corrupt(path, format!("{} bytes for a {h}x{w} flow", bytes.len())));
    }
    let floats: Vec<f32> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (u, v) = floats.split_at(h * w);
    Ok(FlowMap::new(h, w, u.to_vec(), v.to_vec())?)
}

pub fn flow_path(flow_root: &Path, clip_id: &str, t: usize, k: usize) -> PathBuf {
    flow_root.join(clip_id).join(format!("t{t:06}_k{k}.flo1"))
}

pub fn read_flow(path: &Path) -> Result<FlowMap> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode_flow(&bytes, path)
}

/// Flows `F_{t-1} .. F_{t-n}` for target `t`, each mapping the target to
/// its (edge-padded) neighbor.
pub fn read_window_flows(flow_root: &Path, clip_id: &str, t: usize, n: usize) -> Result<Vec<FlowMap>> {
    (1..=n).map(|k| read_flow(&flow_path(flow_root, clip_id, t, k))).collect()
}

/// Estimate and store the flow for every `(t, k ≤ n)` of `lr_clip`.
/// Files whose contents are already correct are left untouched; returns
/// the number of files written.
pub fn precompute_flows(lr_clip: &Clip, n: usize, params: &FlowParams, flow_root: &Path) -> Result<usize> {
    let frames = lr_clip.frames();
    let jobs: Vec<(usize, usize)> = (0..frames.len()).flat_map(|t| (1..=n).map(move |k| (t, k))).collect();
    let written = with_pool(|| {
        jobs.par_iter()
            .map(|&(t, k)| {
                let source = &frames[neighbor_index(t, k)];
                let flow = estimate_flow(source, &frames[t], params)?;
                write_if_changed(&flow_path(flow_root, &lr_clip.clip_id, t, k), &encode_flow(&flow))
            })
            .collect::<Result<Vec<bool>>>()
    })?;
    Ok(written.into_iter().filter(|&w| w).count())
}
