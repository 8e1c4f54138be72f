use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::SirmConfig;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor, Var};

pub const EMBEDDING_NAME: &str = "embedding";
const EMBEDDING_STD: f64 = 0.1;

/// A named, ordered view over every trainable tensor of a model.
///
/// The order is stable and is shared by gradient collection, the optimizer
/// and checkpoints.
pub trait Parameters<T: Real> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)>;
}

impl<T: Real> Parameters<T> for Vec<(String, Tensor<T>)> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.iter().map(|(n, t)| (n.clone(), t)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.iter_mut().map(|(n, t)| (n.clone(), t)).collect()
    }
}

/// Total element count, optionally leaving out the word embedding table.
pub fn param_count<T: Real>(params: &impl Parameters<T>, include_embeddings: bool) -> usize {
    params
        .tensors()
        .iter()
        .filter(|(name, _)| include_embeddings || name != EMBEDDING_NAME)
        .map(|(_, t)| t.numel())
        .sum()
}

/// Weight and bias of a convolution (`[h×d_in×d_out]`, `[d_out]`) or a
/// dense layer (`[d_in×d_out]`, `[d_out]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Affine<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Affine<T> {
    pub(crate) fn zeros(weight_shape: Vec<usize>) -> Self {
        let out = *weight_shape.last().expect("weight has a shape");
        Affine {
            weight: Tensor::zeros(weight_shape).with_grad(),
            bias: Tensor::zeros(vec![out]).with_grad(),
        }
    }

    /// Glorot-uniform weight, zero bias. For kernels the window counts
    /// towards both fans.
    pub(crate) fn glorot(weight_shape: Vec<usize>, rng: &mut impl Rng) -> Self {
        let mut a = Self::zeros(weight_shape);
        let shape = a.weight.shape();
        let (fan_in, fan_out) = match shape {
            [h, i, o] => (h * i, h * o),
            [i, o] => (*i, *o),
            _ => unreachable!("affine weights are rank 2 or 3"),
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        for w in a.weight.data_mut() {
            *w = T::of(dist.sample(rng));
        }
        a
    }

    pub(crate) fn register<'p>(&'p self, g: &mut Graph<'p, T>) -> AffineVars {
        AffineVars {
            weight: g.param(&self.weight),
            bias: g.param(&self.bias),
        }
    }

    pub(crate) fn cast<U: Real>(&self) -> Affine<U> {
        Affine {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AffineVars {
    pub weight: Var,
    pub bias: Var,
}

/// Every trainable tensor of a SIRM network.
#[derive(Clone, Debug, PartialEq)]
pub struct SirmParams<T> {
    /// `[V×d_e]`
    pub embedding: Tensor<T>,
    /// One convolution per skim window size, ascending.
    pub src_filters: Vec<Affine<T>>,
    pub sent_neighbor: Affine<T>,
    pub sent_dense: Affine<T>,
    pub para_neighbor: Affine<T>,
    pub para_dense: Affine<T>,
    pub out_head: Affine<T>,
    pub adv_head: Affine<T>,
}

/// Graph handles of a registered [`SirmParams`].
#[derive(Clone, Debug)]
pub struct SirmVars {
    pub embedding: Var,
    pub src_filters: Vec<AffineVars>,
    pub sent_neighbor: AffineVars,
    pub sent_dense: AffineVars,
    pub para_neighbor: AffineVars,
    pub para_dense: AffineVars,
    pub out_head: AffineVars,
    pub adv_head: AffineVars,
}

impl SirmVars {
    /// Handles in [`Parameters::tensors`] order.
    pub fn ordered(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        for a in self.src_filters.iter().chain([
            &self.sent_neighbor,
            &self.sent_dense,
            &self.para_neighbor,
            &self.para_dense,
            &self.out_head,
            &self.adv_head,
        ]) {
            out.push(a.weight);
            out.push(a.bias);
        }
        out
    }
}

/// Expected `(name, shape)` of every tensor for `config`, in canonical order.
pub fn sirm_shapes(config: &SirmConfig) -> Vec<(String, Vec<usize>)> {
    let g = config.g_width();
    let w = config.neighbor_window();
    let mut out = vec![(
        EMBEDDING_NAME.to_string(),
        vec![config.vocab_size, config.d_e],
    )];
    let mut affine = |name: String, shape: Vec<usize>| {
        let bias = vec![*shape.last().expect("non-empty")];
        out.push((format!("{name}.weight"), shape));
        out.push((format!("{name}.bias"), bias));
    };
    for &h in &config.src_windows {
        affine(format!("src.h{h}"), vec![h, config.d_e, config.d_c]);
    }
    affine("sent_neighbor".into(), vec![w, config.d_e, config.d_ns]);
    affine(
        "sent_dense".into(),
        vec![g + config.d_ns + config.d_e, config.d_as],
    );
    affine("para_neighbor".into(), vec![w, config.d_as, config.d_np]);
    affine(
        "para_dense".into(),
        vec![g + config.d_np + config.d_as, config.d_ap],
    );
    affine("out_head".into(), vec![config.d_ap + g, 1]);
    affine("adv_head".into(), vec![g, 2]);
    out
}

impl<T: Real> SirmParams<T> {
    fn build(config: &SirmConfig, mut affine: impl FnMut(Vec<usize>) -> Affine<T>) -> Self {
        let g = config.g_width();
        let w = config.neighbor_window();
        SirmParams {
            embedding: Tensor::zeros(vec![config.vocab_size, config.d_e]).with_grad(),
            src_filters: config
                .src_windows
                .iter()
                .map(|&h| affine(vec![h, config.d_e, config.d_c]))
                .collect(),
            sent_neighbor: affine(vec![w, config.d_e, config.d_ns]),
            sent_dense: affine(vec![g + config.d_ns + config.d_e, config.d_as]),
            para_neighbor: affine(vec![w, config.d_as, config.d_np]),
            para_dense: affine(vec![g + config.d_np + config.d_as, config.d_ap]),
            out_head: affine(vec![config.d_ap + g, 1]),
            adv_head: affine(vec![g, 2]),
        }
    }

    pub fn zeros(config: &SirmConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::build(config, Affine::zeros))
    }

    /// Seeded initialization: Glorot-uniform weights, zero biases and
    /// `N(0, 0.1)` word embeddings.
    pub fn init(config: &SirmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, EMBEDDING_STD).expect("valid std");
        let mut params = Self::build(config, |shape| Affine::glorot(shape, &mut rng));
        for e in params.embedding.data_mut() {
            *e = T::of(normal.sample(&mut rng));
        }
        Ok(params)
    }

    /// Rebuilds parameters from named tensors, checking names and shapes
    /// against `config`.
    pub fn from_named(config: &SirmConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let expected = sirm_shapes(config);
        if named.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                named.len()
            )));
        }
        for ((name, mut tensor), (slot_name, slot)) in named.into_iter().zip(params.tensors_mut()) {
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
        Ok(params)
    }

    pub fn register<'p>(&'p self, g: &mut Graph<'p, T>) -> SirmVars {
        SirmVars {
            embedding: g.param(&self.embedding),
            src_filters: self.src_filters.iter().map(|a| a.register(g)).collect(),
            sent_neighbor: self.sent_neighbor.register(g),
            sent_dense: self.sent_dense.register(g),
            para_neighbor: self.para_neighbor.register(g),
            para_dense: self.para_dense.register(g),
            out_head: self.out_head.register(g),
            adv_head: self.adv_head.register(g),
        }
    }

    pub fn cast<U: Real>(&self) -> SirmParams<U> {
        SirmParams {
            embedding: self.embedding.cast(),
            src_filters: self.src_filters.iter().map(Affine::cast).collect(),
            sent_neighbor: self.sent_neighbor.cast(),
            sent_dense: self.sent_dense.cast(),
            para_neighbor: self.para_neighbor.cast(),
            para_dense: self.para_dense.cast(),
            out_head: self.out_head.cast(),
            adv_head: self.adv_head.cast(),
        }
    }

    fn affines(&self) -> Vec<(String, &Affine<T>)> {
        let mut out: Vec<(String, &Affine<T>)> = self
            .src_filters
            .iter()
            .map(|a| (format!("src.h{}", a.weight.shape()[0]), a))
            .collect();
        out.extend([
            ("sent_neighbor".to_string(), &self.sent_neighbor),
            ("sent_dense".to_string(), &self.sent_dense),
            ("para_neighbor".to_string(), &self.para_neighbor),
            ("para_dense".to_string(), &self.para_dense),
            ("out_head".to_string(), &self.out_head),
            ("adv_head".to_string(), &self.adv_head),
        ]);
        out
    }
}

impl<T: Real> Parameters<T> for SirmParams<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![(EMBEDDING_NAME.to_string(), &self.embedding)];
        for (name, a) in self.affines() {
            out.push((format!("{name}.weight"), &a.weight));
            out.push((format!("{name}.bias"), &a.bias));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let names: Vec<String> = self.tensors().into_iter().map(|(n, _)| n).collect();
        let mut refs: Vec<&mut Tensor<T>> = vec![&mut self.embedding];
        for a in self.src_filters.iter_mut().chain([
            &mut self.sent_neighbor,
            &mut self.sent_dense,
            &mut self.para_neighbor,
            &mut self.para_dense,
            &mut self.out_head,
            &mut self.adv_head,
        ]) {
            refs.push(&mut a.weight);
            refs.push(&mut a.bias);
        }
        names.into_iter().zip(refs).collect()
    }
}
