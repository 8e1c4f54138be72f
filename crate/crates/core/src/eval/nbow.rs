//! Neural bag-of-words baseline: mean word embedding, then a logistic head.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Affine, Classifier, ExampleLoss, ModelConfig, Parameters, EMBEDDING_NAME};
use crate::tensor::{Graph, Real, Tensor, Var};
use crate::text::ParagraphGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NbowConfig {
    pub d_e: usize,
    pub m: usize,
    pub n: usize,
    pub vocab_size: usize,
}

impl Default for NbowConfig {
    fn default() -> Self {
        NbowConfig {
            d_e: 64,
            m: 8,
            n: 32,
            vocab_size: 30_000,
        }
    }
}

impl NbowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_e == 0 || self.m == 0 || self.n == 0 {
            return Err(Error::Config("nbow dimensions must be >= 1".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NbowModel<T> {
    pub config: NbowConfig,
    /// `[V×d_e]`
    pub embedding: Tensor<T>,
    /// `[d_e×1]` weight and `[1]` bias.
    pub head: Affine<T>,
}

const EMBEDDING_STD: f64 = 0.1;

impl<T: Real> NbowModel<T> {
    pub fn init(config: NbowConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, EMBEDDING_STD).expect("valid std");
        let head = Affine::glorot(vec![config.d_e, 1], &mut rng);
        let data = (0..config.vocab_size * config.d_e)
            .map(|_| T::of(normal.sample(&mut rng)))
            .collect();
        let embedding = Tensor::new(vec![config.vocab_size, config.d_e], data)?.with_grad();
        Ok(NbowModel {
            config,
            embedding,
            head,
        })
    }

    pub fn from_named(config: NbowConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut model = Self::init(config, 0)?;
        if named.len() != 3 {
            return Err(Error::Checkpoint(format!(
                "expected 3 tensors, found {}",
                named.len()
            )));
        }
        for ((name, mut tensor), (slot_name, slot)) in named.into_iter().zip(model.tensors_mut()) {
            if name != slot_name || tensor.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name:?} {:?} does not match expected {slot_name:?} {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            tensor.set_requires_grad(true);
            *slot = tensor;
        }
        Ok(model)
    }

    fn forward<'p>(
        &'p self,
        g: &mut Graph<'p, T>,
        grid: &ParagraphGrid,
    ) -> Result<(Var, [Var; 3])> {
        grid.validate(self.config.vocab_size)?;
        if (grid.m, grid.n) != (self.config.m, self.config.n) {
            return Err(Error::shape(
                "paragraph grid",
                &[grid.m, grid.n],
                &[self.config.m, self.config.n],
            ));
        }
        let emb = g.param(&self.embedding);
        let w = g.param(&self.head.weight);
        let b = g.param(&self.head.bias);
        let p = nbow_probability(g, emb, w, b, grid)?;
        Ok((p, [emb, w, b]))
    }
}

/// Mean embedding of the valid tokens fed through `sigmoid(w·x + b)`.
///
/// The mean is taken as a weighted sum over distinct ids in ascending order,
/// so the result is bit-identical under any reordering of the tokens.
pub fn nbow_probability<T: Real>(
    g: &mut Graph<'_, T>,
    embedding: Var,
    weight: Var,
    bias: Var,
    grid: &ParagraphGrid,
) -> Result<Var> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for id in grid.valid_tokens() {
        *counts.entry(id).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::EmptyPool);
    }
    let ids: Vec<usize> = counts.keys().copied().collect();
    let weights = counts
        .values()
        .map(|&c| T::of(c as f64 / total as f64))
        .collect();
    let rows = g.gather_rows(embedding, &ids)?;
    let mean = g.weighted_row_sum(rows, weights)?;
    let width = g.shape(mean)[0];
    let row = g.reshape(mean, vec![1, width])?;
    let z = g.matmul(row, weight)?;
    let z = g.add_bias(z, bias)?;
    let p = g.sigmoid(z);
    g.reshape(p, Vec::new())
}

impl<T: Real> Parameters<T> for NbowModel<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![
            (EMBEDDING_NAME.to_string(), &self.embedding),
            ("head.weight".to_string(), &self.head.weight),
            ("head.bias".to_string(), &self.head.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        vec![
            (EMBEDDING_NAME.to_string(), &mut self.embedding),
            ("head.weight".to_string(), &mut self.head.weight),
            ("head.bias".to_string(), &mut self.head.bias),
        ]
    }
}

impl<T: Real> Classifier<T> for NbowModel<T> {
    fn config(&self) -> ModelConfig {
        ModelConfig::Nbow(self.config.clone())
    }

    fn probability(&self, grid: &ParagraphGrid) -> Result<T> {
        let mut g = Graph::new();
        let (p, _) = self.forward(&mut g, grid)?;
        g.scalar_value(p)
    }

    fn loss_and_gradients(&self, grid: &ParagraphGrid) -> Result<(ExampleLoss<T>, Vec<Vec<T>>)> {
        let mut g = Graph::new();
        let (p, vars) = self.forward(&mut g, grid)?;
        let loss = g.binary_cross_entropy(p, grid.label)?;
        crate::model::ordered_gradients(&g, loss, loss, &vars, &self.tensors())
    }
}
