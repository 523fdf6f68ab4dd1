//! Embedding-enhanced mixture density modeling of stochastic transistor
//! I–V behavior.
//!
//! The pipeline: [`trainer::train`] fits a Mish-activated mixture density
//! network with per-device embeddings under a closed-form CRPS loss;
//! [`embedding_space`] fits a Gaussian over the learned embeddings to generate
//! synthetic devices; [`sweep`] draws non-negative currents from truncated
//! mixtures with one quantile held across each monotone segment of a drive
//! waveform.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod crps;
pub mod error;
pub mod math;
pub mod embedding_space;
pub mod io;
pub mod mdn;
pub mod model_file;
pub mod oracle;
pub mod sweep;
pub mod trainer;
pub mod truncated;

pub use error::{Error, Result};
