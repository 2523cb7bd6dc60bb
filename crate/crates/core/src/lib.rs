//! Bias-corrected weighted matrix factorization with text-conditioned item
//! weights.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`]: rating ingestion, coverage-preserving splits, bi-scaling and a
//!   synthetic missing-not-at-random generator with known propensities.
//! * [`textprep`]: tokenisation, vocabulary construction and fixed-length
//!   encoding of item documents.
//! * [`encoder`]: a small convolutional (or averaging) text encoder with
//!   hand-written backpropagation.
//! * [`sam`]: the self-adaptive weight module. Per-item weights `w_j >= 1`
//!   are produced from item text and fitted by minimising the spectral norm
//!   of `I∘W − J`.
//! * [`factorization`]: weighted alternating ridge updates for the plain,
//!   encoder-regularised and weighted objectives.
//! * [`experiment`]: RMSE, improvement ratios and the table/sweep harness.

pub mod data;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod factorization;
pub mod sam;
pub mod textprep;

pub use error::{Error, Result};
