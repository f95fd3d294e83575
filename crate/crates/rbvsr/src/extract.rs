//! Frame ingest from directories or, through an external `ffmpeg`, video
//! files.

use std::fs;
use std::path::Path;
use std::process::{Command, Stdio};

use rbvsr_core::pipeline::Clip;

use crate::error::{Error, Result};
use crate::frames::{frame_file_name, read_clip_dir, write_frame};

/// Name of the external decoder binary.
pub const DECODER: &str = "ffmpeg";

fn clip_id_of(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("clip")
        .to_string()
}

/// Decode `video_path` (a video file or a directory of numbered images)
/// and write its frames losslessly as `<out_dir>/%06d.png`.
pub fn extract_frames(video_path: &Path, out_dir: &Path) -> Result<Clip> {
    let clip_id = clip_id_of(video_path);
    let clip = if video_path.is_dir() {
        read_clip_dir(video_path, &clip_id)?
    } else if video_path.is_file() {
        decode_video(video_path, out_dir, &clip_id)?
    } else {
        return Err(Error::UnreadableSource(format!("{}: no such file or directory", video_path.display())));
    };
    for (i, frame) in clip.frames().iter().enumerate() {
        write_frame(&out_dir.join(frame_file_name(i)), frame)?;
    }
    Ok(clip)
}

fn decode_video(path: &Path, out_dir: &Path, clip_id: &str) -> Result<Clip> {
    let scratch = out_dir.join(".decode");
    fs::create_dir_all(&scratch).map_err(Error::io(&scratch))?;
    let status = Command::new(DECODER)
        .args(["-v", "error", "-nostdin", "-y", "-i"])
        .arg(path)
        .arg(scratch.join("%06d.png"))
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .output();
    let result = match status {
        Err(e) => Err(Error::UnreadableSource(format!(
            "{}: cannot run {DECODER} ({e}); pass a directory of frames instead",
            path.display()
        ))),
        Ok(out) if !out.status.success() => Err(Error::UnreadableSource(format!(
            "{}: {DECODER} failed: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))),
        Ok(_) => read_clip_dir(&scratch, clip_id),
    };
    let _ = fs::remove_dir_all(&scratch);
    result
}
