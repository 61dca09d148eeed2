//! File formats, configuration and commands for the `ptycho` pipeline:
//! simulate a dataset, stitch patch predictions, reconstruct with ePIE
//! (cold or warm-started), score, and sweep scan offsets.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod npy;
pub mod preview;
pub mod sweep;

pub use error::{PipelineError, Result};
