//! Disentangling sequence data into a time-variant (content) representation
//! and a time-invariant (speaker) representation with a dual-encoder,
//! weighted-KL sequential VAE.
//!
//! The crate is organized as a library; the `examples/` directory holds one
//! runnable example per capability, and a single thin `dualvae` binary
//! exposes the same capabilities as subcommands.
//!
//! - [`tensor`] — deterministic reverse-mode autodiff with a
//!   finite-difference verification harness
//! - [`model`] — speaker encoder, content encoder, decoder with refinement
//!   net, posterior sampling, conversion
//! - [`objective`] — weighted loss, closed-form Gaussian KL, and the
//!   variational mutual-information bound lab
//! - [`data`] — factor-controlled synthetic corpus, feature-file and
//!   manifest I/O, batching, segment shuffle
//! - [`training`] — Adam optimization with bit-exact checkpoint/resume
//! - [`eval`] — speaker-verification EER protocol, weight-grid sweep,
//!   conversion probe
//! - [`config`] / [`commands`] — run configuration and the operator surface

pub mod commands;
pub mod config;
pub mod data;
pub mod eval;
pub mod model;
pub mod objective;
pub mod rng;
pub mod tensor;
pub mod training;

pub use tensor::{Graph, Scalar, Tensor, TensorError, TensorId};
