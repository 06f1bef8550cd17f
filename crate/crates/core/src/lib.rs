//! Core library of `digitnet`: a small, dependency-light convolutional
//! network for 10-class digit recognition, written from scratch on dense
//! `f64` tensors.
//!
//! The crate is `no_std` (with `alloc`); everything here is pure
//! computation over in-memory buffers. File formats, checkpointing and the
//! command-line frontend live in the companion `digitnet-cli` crate.
//!
//! Module map:
//!
//! - [`tensor`] — the dense n-d array type plus the raw numeric kernels
//!   (valid 2-D correlation, average pooling, elementwise ops).
//! - [`nn`] — layer specs, geometry validation, initialization, forward /
//!   backward passes, loss, and the built-in 32×32 digit architecture.
//! - [`optim`] — per-sample SGD with momentum, weight decay, L2
//!   regularization, and plateau learning-rate annealing.
//! - [`data`] — IDX container parsing, 28×28 → 32×32 padding,
//!   normalization, and deterministic subsetting.
//! - [`train`] — the epoch loop and metric computation (accuracy,
//!   per-class accuracy, confusion matrix).
//! - [`gradcheck`] — central finite-difference verification of the
//!   analytic gradients.
//!
//! Determinism is a design contract: every operation uses a fixed
//! reduction order and every random draw comes from a seeded ChaCha8
//! stream, so identical seeds and inputs reproduce results bit for bit.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod gradcheck;
mod hash;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
