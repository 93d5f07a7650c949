//! Adaptive dynamic k-space subsampling and reconstruction for multi-coil
//! dynamic MRI.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem (tensor containers, checkpoints, reports, the CLI) lives in the
//! `ksampler` companion crate.
//!
//! Module map:
//!
//! - [`tensor`], [`fft`], [`autodiff`]: dense tensors, centered FFTs and a
//!   reverse-mode tape with every primitive the networks need.
//! - [`forward`]: sampling sets, masks, the multi-coil forward/adjoint pair,
//!   sensitivity estimation and preprocessing.
//! - [`schemes`]: predetermined and random sampling patterns, kt interleaving
//!   and seed policy.
//! - [`ads`]: the adaptive dynamic sampler (budget, rescale, straight-through
//!   binarization, cascades).
//! - [`recon`]: zero-filled baseline and the unrolled reconstructor.
//! - [`losses`], [`metrics`], [`aso`]: training losses, evaluation metrics and
//!   the almost-stochastic-order test.
//! - [`pipeline`]: phantoms, end-to-end forward pass, training, evaluation and
//!   comparison.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ads;
pub mod aso;
pub mod autodiff;
pub mod error;
pub mod fft;
pub mod forward;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod recon;
pub mod schemes;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Kind, Tensor};
