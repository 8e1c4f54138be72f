//! Skim and Intensive Reading Model (SIRM) for detecting implied meaning
//! such as sarcasm in short texts.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense tensors and a reverse-mode autodiff graph.
//! - [`text`]: tokenization, vocabulary, and the fixed `m×n` paragraph grid.
//! - [`model`]: the SIRM network, its parameters, and its loss.
//! - [`train`]: Adam, the mini-batch training loop, and checkpoints.
//! - [`eval`]: classification metrics and the NBOW baseline.

pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
