//! Recurrent back-projection video super-resolution, `no_std` core.
//!
//! Everything here is pure computation over in-memory data: frames and
//! bicubic resampling, LR/HR pair generation and clip windowing, optical
//! flow, the generator and discriminator networks with a small
//! reverse-mode autodiff engine, the training objectives, Adam, and
//! PSNR/SSIM. File formats, the training loop driver and the CLI live in
//! the `rbvsr` crate.

#![no_std]

extern crate alloc;

pub mod discriminator;
pub mod error;
pub mod feature;
pub mod flow;
pub mod frame;
pub mod generator;
pub mod graph;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod resize;
pub mod tensor;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};
pub use frame::Frame;
pub use tensor::Tensor;
