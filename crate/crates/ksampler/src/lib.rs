//! File formats, checkpoints, experiment runs and the command line for
//! [`ksampler_core`].
//!
//! - [`ktn`]: the `KTN1` binary tensor container.
//! - [`mask`]: the sampling-set text format.
//! - [`render`]: PNG/PGM views of masks and images.
//! - [`report`]: metrics CSV, JSON summaries and comparison tables.
//! - [`checkpoint`]: parameter directories with a manifest.
//! - [`config`]: flat key-value experiment configs.
//! - [`experiment`]: training, evaluation and comparison on disk.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod ktn;
pub mod mask;
pub mod render;
pub mod report;

pub use error::{Error, Result};
