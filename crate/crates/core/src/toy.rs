//! Procedural toy corpus: textured squares drifting over a textured
//! background. Fully determined by the seed.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::frame::Frame;
use crate::pipeline::Clip;
use crate::trainer::derive_seed;

#[derive(Clone, Copy, Debug)]
struct Square {
    y: f64,
    x: f64,
    vy: f64,
    vx: f64,
    size: f64,
    color: [f64; 3],
    freq: f64,
}

struct Background {
    freqs: [(f64, f64); 3],
    phase: [f64; 3],
    base: [f64; 3],
}

/// One HR clip of `frames` frames of `height × width`.
pub fn toy_clip(seed: u64, index: usize, frames: usize, height: usize, width: usize) -> Result<Clip> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7000 + index as u64));
    let bg = Background {
        freqs: [
            (rng.random_range(0.15..0.6), rng.random_range(0.15..0.6)),
            (rng.random_range(0.15..0.6), rng.random_range(-0.6..-0.15)),
            (rng.random_range(0.6..1.2), rng.random_range(0.05..0.3)),
        ],
        phase: [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)],
        base: [rng.random_range(0.3..0.7), rng.random_range(0.3..0.7), rng.random_range(0.3..0.7)],
    };
    // camera pan in HR pixels per frame
    let pan = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let squares: Vec<Square> = (0..3)
        .map(|_| Square {
            y: rng.random_range(0.0..height as f64),
            x: rng.random_range(0.0..width as f64),
            vy: rng.random_range(-4.0..4.0),
            vx: rng.random_range(-4.0..4.0),
            size: rng.random_range(0.2..0.4) * height.min(width) as f64,
            color: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
            freq: rng.random_range(0.8..1.6),
        })
        .collect();

    let frames = (0..frames)
        .map(|t| {
            let t = t as f64;
            Frame::from_fn(height, width, |c, y, x| {
                let (yf, xf) = (y as f64 + pan.0 * t, x as f64 + pan.1 * t);
                let mut v = bg.base[c];
                for (k, (fy, fx)) in bg.freqs.iter().enumerate() {
                    v += 0.12 * libm::sin(fy * yf + fx * xf + bg.phase[k] + 0.7 * c as f64);
                }
                for s in &squares {
                    let cy = s.y + s.vy * t;
                    let cx = s.x + s.vx * t;
                    let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                    if libm::fabs(dy) <= s.size / 2.0 && libm::fabs(dx) <= s.size / 2.0 {
                        v = s.color[c] * 0.7 + 0.3 * (0.5 + 0.5 * libm::sin(s.freq * (dx + dy)) * libm::cos(s.freq * dx));
                    }
                }
                v
            })
        })
        .collect();
    Clip::new(format!("toy{index:03}"), "procedural", frames)
}

/// `clips` HR toy clips.
pub fn toy_corpus(seed: u64, clips: usize, frames: usize, height: usize, width: usize) -> Result<Vec<Clip>> {
    (0..clips).map(|i| toy_clip(seed, i, frames, height, width)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = toy_clip(3, 1, 4, 16, 20).unwrap();
        let b = toy_clip(3, 1, 4, 16, 20).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a.dims(), Some((16, 20)));
        let c = toy_clip(3, 2, 4, 16, 20).unwrap();
        assert_ne!(a.frames()[0], c.frames()[0]);
        // frames move
        assert_ne!(a.frames()[0], a.frames()[1]);
    }
}
