use serde::{Deserialize, Serialize};

use super::config::SirmConfig;
use super::params::{Parameters, SirmParams};
use super::sirm::{sirm_forward, sirm_loss};
use crate::error::Result;
use crate::eval::NbowConfig;
use crate::tensor::{Graph, Real, Tensor, Var};
use crate::text::ParagraphGrid;

/// Architecture and hyperparameters of a stored model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelConfig {
    Sirm(SirmConfig),
    Nbow(NbowConfig),
}

impl ModelConfig {
    pub fn grid_shape(&self) -> (usize, usize) {
        match self {
            ModelConfig::Sirm(c) => (c.m, c.n),
            ModelConfig::Nbow(c) => (c.m, c.n),
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            ModelConfig::Sirm(c) => c.vocab_size,
            ModelConfig::Nbow(c) => c.vocab_size,
        }
    }
}

/// A binary classifier over paragraph grids that the trainer can optimize.
pub trait Classifier<T: Real>: Parameters<T> {
    fn config(&self) -> ModelConfig;

    /// Probability of the positive class.
    fn probability(&self, grid: &ParagraphGrid) -> Result<T>;

    /// Training loss of one example and its gradient for every tensor, in
    /// [`Parameters::tensors`] order.
    fn loss_and_gradients(&self, grid: &ParagraphGrid) -> Result<(ExampleLoss<T>, Vec<Vec<T>>)>;
}

/// Loss of one example: the optimized total and its classification part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExampleLoss<T> {
    pub total: T,
    pub bce: T,
}

/// Collects per-tensor gradients, filling zeros where nothing flowed.
pub(crate) fn ordered_gradients<T: Real>(
    g: &Graph<'_, T>,
    loss: Var,
    bce: Var,
    vars: &[Var],
    tensors: &[(String, &Tensor<T>)],
) -> Result<(ExampleLoss<T>, Vec<Vec<T>>)> {
    let value = ExampleLoss {
        total: g.scalar_value(loss)?,
        bce: g.scalar_value(bce)?,
    };
    let grads = g.backward(loss)?;
    let out = vars
        .iter()
        .zip(tensors)
        .map(|(&v, (_, t))| {
            grads
                .get(v)
                .map(<[T]>::to_vec)
                .unwrap_or_else(|| vec![T::zero(); t.numel()])
        })
        .collect();
    Ok((value, out))
}

/// SIRM parameters bundled with their configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SirmModel<T> {
    pub config: SirmConfig,
    pub params: SirmParams<T>,
}

impl<T: Real> SirmModel<T> {
    pub fn init(config: SirmConfig, seed: u64) -> Result<Self> {
        let params = SirmParams::init(&config, seed)?;
        Ok(SirmModel { config, params })
    }

    pub fn from_named(config: SirmConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let params = SirmParams::from_named(&config, named)?;
        Ok(SirmModel { config, params })
    }

    fn check_grid(&self, grid: &ParagraphGrid) -> Result<()> {
        grid.validate(self.config.vocab_size)
    }
}

impl<T: Real> Parameters<T> for SirmModel<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.params.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.params.tensors_mut()
    }
}

impl<T: Real> Classifier<T> for SirmModel<T> {
    fn config(&self) -> ModelConfig {
        ModelConfig::Sirm(self.config.clone())
    }

    fn probability(&self, grid: &ParagraphGrid) -> Result<T> {
        self.check_grid(grid)?;
        let mut g = Graph::new();
        let vars = self.params.register(&mut g);
        let trace = sirm_forward(&mut g, &vars, grid, &self.config)?;
        g.scalar_value(trace.y_prime)
    }

    fn loss_and_gradients(&self, grid: &ParagraphGrid) -> Result<(ExampleLoss<T>, Vec<Vec<T>>)> {
        self.check_grid(grid)?;
        let mut g = Graph::new();
        let vars = self.params.register(&mut g);
        let trace = sirm_forward(&mut g, &vars, grid, &self.config)?;
        let loss = sirm_loss(&mut g, &trace, grid.label)?;
        ordered_gradients(
            &g,
            loss.total,
            loss.bce,
            &vars.ordered(),
            &self.params.tensors(),
        )
    }
}
