//! PNG frame files and the `<root>/<clip_id>/%06d.png` clip layout.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use rbvsr_core::pipeline::Clip;
use rbvsr_core::Frame;

use crate::error::{Error, Result};

/// File extensions accepted as still images when ingesting a directory.
pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.png")
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let rgb = img.into_rgb8();
    Ok(Frame::from_interleaved_u8(h, w, 3, rgb.as_raw())?)
}

/// Encode `frame` as an 8-bit RGB PNG (values are rounded from `[0, 1]`).
pub fn encode_png(frame: &Frame) -> Result<Vec<u8>> {
    let (h, w) = frame.dims();
    let img = RgbImage::from_raw(w as u32, h as u32, frame.to_rgb8()).expect("buffer matches frame size");
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|source| Error::Image {
        path: PathBuf::from("<memory>"),
        source,
    })?;
    Ok(buf.into_inner())
}

/// Write `bytes` unless the file already holds exactly them. Returns
/// whether anything was written.
pub fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<bool> {
    if let Ok(existing) = fs::read(path) {
        if existing == bytes {
            return Ok(false);
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    fs::write(path, bytes).map_err(Error::io(path))?;
    Ok(true)
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<bool> {
    write_if_changed(path, &encode_png(frame)?)
}

/// Image files in `dir`, ordered by the number in their file stem (files
/// whose stem is not a number sort after, by name).
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::UnreadableSource(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    let key = |p: &PathBuf| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
        let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
        (digits.parse::<u64>().map_or(u64::MAX, |n| n), stem)
    };
    files.sort_by_key(key);
    Ok(files)
}

/// Read every frame of a directory into a clip.
pub fn read_clip_dir(dir: &Path, clip_id: &str) -> Result<Clip> {
    let files = list_frame_files(dir)?;
    if files.is_empty() {
        return Err(Error::UnreadableSource(format!("{}: no image files", dir.display())));
    }
    let frames = files.iter().map(|f| read_frame(f)).collect::<Result<Vec<_>>>()?;
    Ok(Clip::new(clip_id, dir.display().to_string(), frames)?)
}

/// Write a clip as `<root>/<clip_id>/%06d.png`; returns how many files
/// changed.
pub fn write_clip(root: &Path, clip: &Clip) -> Result<usize> {
    let dir = root.join(&clip.clip_id);
    let mut changed = 0;
    for (i, f) in clip.frames().iter().enumerate() {
        changed += write_frame(&dir.join(frame_file_name(i)), f)? as usize;
    }
    Ok(changed)
}

pub fn read_clip(root: &Path, clip_id: &str) -> Result<Clip> {
    read_clip_dir(&root.join(clip_id), clip_id)
}

/// Subdirectory names of `root`, sorted.
pub fn list_subdirs(root: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(root).map_err(|e| Error::UnreadableSource(format!("{}: {e}", root.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .collect();
    names.sort();
    Ok(names)
}
