//! The SIRM network: configuration, parameters, forward pass and loss.

pub mod check;
mod classifier;
mod config;
mod params;
mod position;
mod sirm;

pub(crate) use classifier::ordered_gradients;
pub use classifier::{Classifier, ExampleLoss, ModelConfig, SirmModel};
pub use config::SirmConfig;
pub use params::{
    param_count, sirm_shapes, Affine, AffineVars, Parameters, SirmParams, SirmVars, EMBEDDING_NAME,
};
pub use position::{pair_frequency, positional_encoding};
pub use sirm::{
    dense_connect_pool, embed_paragraph, near_neighbor_encode, sirm_forward, sirm_forward_with,
    sirm_loss, skim_forward, ForwardTrace, LossTerms, Reversal,
};
