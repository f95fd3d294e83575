//! File formats, corpus preparation, the training driver, evaluation and
//! the command-line interface built on `rbvsr-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod extract;
pub mod fit;
pub mod flowstore;
pub mod frames;
pub mod prepare;
pub mod threads;

pub use error::{Error, Result};
