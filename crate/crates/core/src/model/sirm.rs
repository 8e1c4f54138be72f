//! Forward pass of the Skim and Intensive Reading Model.
//!
//! ```text
//! grid ─ embed + positions ─ S′ ──┬─ skim convolutions ─ g ─┬──────────────┐
//!                                 │                         │              │
//!                                 └─ per sentence: neighbor ─ dense(g,·) ─ o_i
//!                                      O + positions ─ neighbor ─ dense(g,·) ─ o_P
//!                        y′ = σ(W_o·(o_P ⊕ g) + b_o)      y″ = softmax(W_g·rev(g) + b_g)
//! ```

use super::config::SirmConfig;
use super::params::{AffineVars, SirmVars};
use super::position::positional_encoding;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Padding, PoolDenominator, Real, Var};
use crate::text::ParagraphGrid;

/// How gradients pass from the adversarial head back into `g`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reversal {
    /// Gradient reversal with the given scale: the head minimizes its loss
    /// while everything upstream of `g` receives `-scale` times its gradient.
    Scaled(f64),
    /// Plain identity; the adversarial loss is minimized everywhere.
    Disabled,
}

/// Handles to every intermediate of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Position-augmented embeddings `[m×n×d_e]`.
    pub s_prime: Var,
    /// Skim vector `[|g|]`.
    pub g: Var,
    /// Sentence-level near-neighbor features `[m×n×d_ns]`.
    pub u_sent: Var,
    /// Sentence encodings `O`, `[m×d_as]`.
    pub o_sent: Var,
    /// `O` plus sentence positions, `[m×d_as]`.
    pub o_prime: Var,
    /// Paragraph-level near-neighbor features `[m×d_np]`.
    pub u_para: Var,
    /// Paragraph encoding `[d_ap]`.
    pub o_p: Var,
    /// Probability of the positive class, scalar.
    pub y_prime: Var,
    /// Adversarial class distribution `[2]`.
    pub y_dprime: Var,
}

/// Looks up word embeddings and adds the word-position table to every
/// sentence. Returns the flattened paragraph `[(m·n)×d_e]`.
pub fn embed_paragraph<T: Real>(
    g: &mut Graph<'_, T>,
    embedding: Var,
    grid: &ParagraphGrid,
    d_e: usize,
) -> Result<Var> {
    let words = g.gather_rows(embedding, &grid.token_ids)?;
    let pe = positional_encoding::<T>(grid.n, d_e)?;
    let tiled = pe.data().repeat(grid.m);
    let pe = g.constant(vec![grid.m * grid.n, d_e], tiled)?;
    g.add(words, pe)
}

/// Skim reading: one valid convolution with ReLU per window size, each
/// averaged over all of its windows, concatenated in the given order.
pub fn skim_forward<T: Real>(
    g: &mut Graph<'_, T>,
    p_hat: Var,
    filters: &[AffineVars],
) -> Result<Var> {
    let mut pooled = Vec::with_capacity(filters.len());
    for f in filters {
        let c = g.conv1d(p_hat, f.weight, f.bias, Padding::Valid)?;
        let c = g.relu(c);
        pooled.push(g.mean_pool(c, None, PoolDenominator::FixedLen)?);
    }
    g.concat_lastaxis(&pooled)
}

/// Zero-padded `2k+1` convolution followed by ReLU; keeps the row count.
pub fn near_neighbor_encode<T: Real>(
    g: &mut Graph<'_, T>,
    x: Var,
    weights: AffineVars,
    k: usize,
) -> Result<Var> {
    let window = g.shape(weights.weight).first().copied().unwrap_or(0);
    if window != 2 * k + 1 {
        return Err(Error::shape(
            "near_neighbor_encode window",
            &[window],
            &[2 * k + 1],
        ));
    }
    let u = g.conv1d(x, weights.weight, weights.bias, Padding::SameZero)?;
    Ok(g.relu(u))
}

/// Dense connection: each row `j` becomes `relu(W·[g ⊕ u_j ⊕ x′_j] + b)`,
/// then rows are mean-pooled.
pub fn dense_connect_pool<T: Real>(
    g: &mut Graph<'_, T>,
    x_prime: Var,
    u: Var,
    global: Var,
    weights: AffineVars,
    mask: Option<&[bool]>,
    denominator: PoolDenominator,
) -> Result<Var> {
    let rows = g.shape(x_prime)[0];
    if g.shape(u)[0] != rows {
        return Err(Error::shape(
            "dense_connect_pool",
            g.shape(x_prime),
            g.shape(u),
        ));
    }
    let g_rows = g.repeat_rows(global, rows)?;
    let t = g.concat_lastaxis(&[g_rows, u, x_prime])?;
    let z = g.matmul(t, weights.weight)?;
    let z = g.add_bias(z, weights.bias)?;
    let o = g.relu(z);
    g.mean_pool(o, mask, denominator)
}

fn affine_row<T: Real>(g: &mut Graph<'_, T>, x: Var, layer: AffineVars) -> Result<Var> {
    let width = g.shape(x)[0];
    let row = g.reshape(x, vec![1, width])?;
    let z = g.matmul(row, layer.weight)?;
    g.add_bias(z, layer.bias)
}

pub fn sirm_forward<T: Real>(
    g: &mut Graph<'_, T>,
    vars: &SirmVars,
    grid: &ParagraphGrid,
    config: &SirmConfig,
) -> Result<ForwardTrace> {
    sirm_forward_with(g, vars, grid, config, Reversal::Scaled(config.lambda))
}

pub fn sirm_forward_with<T: Real>(
    g: &mut Graph<'_, T>,
    vars: &SirmVars,
    grid: &ParagraphGrid,
    config: &SirmConfig,
    reversal: Reversal,
) -> Result<ForwardTrace> {
    let (m, n) = (config.m, config.n);
    if grid.m != m || grid.n != n {
        return Err(Error::shape("paragraph grid", &[grid.m, grid.n], &[m, n]));
    }
    let mask_aware = config.mask_aware_pooling;

    let p_hat = embed_paragraph(g, vars.embedding, grid, config.d_e)?;
    let s_prime = g.reshape(p_hat, vec![m, n, config.d_e])?;
    let global = skim_forward(g, p_hat, &vars.src_filters)?;

    let mut u_rows = Vec::with_capacity(m);
    let mut o_rows = Vec::with_capacity(m);
    for i in 0..m {
        let sentence = g.slice_rows(p_hat, i * n, n)?;
        let u = near_neighbor_encode(g, sentence, vars.sent_neighbor, config.k)?;
        let word_mask = grid.sentence_word_mask(i);
        // An empty sentence has nothing to count, so it keeps the fixed divisor.
        let (mask, denom) = if mask_aware && grid.sentence_mask[i] {
            (Some(word_mask), PoolDenominator::MaskCount)
        } else {
            (None, PoolDenominator::FixedLen)
        };
        let o = dense_connect_pool(g, sentence, u, global, vars.sent_dense, mask, denom)?;
        u_rows.push(u);
        o_rows.push(o);
    }
    let u_sent = g.stack(&u_rows)?;
    let o_sent = g.stack(&o_rows)?;

    let pe = positional_encoding::<T>(m, config.d_as)?;
    let pe = g.leaf(pe);
    let o_prime = g.add(o_sent, pe)?;
    let u_para = near_neighbor_encode(g, o_prime, vars.para_neighbor, config.k)?;
    let (mask, denom) = if mask_aware {
        (
            Some(grid.sentence_mask.as_slice()),
            PoolDenominator::MaskCount,
        )
    } else {
        (None, PoolDenominator::FixedLen)
    };
    let o_p = dense_connect_pool(g, o_prime, u_para, global, vars.para_dense, mask, denom)?;

    let joined = g.concat_lastaxis(&[o_p, global])?;
    let logit = affine_row(g, joined, vars.out_head)?;
    let y = g.sigmoid(logit);
    let y_prime = g.reshape(y, Vec::new())?;

    let adv_in = match reversal {
        Reversal::Scaled(scale) => g.grad_reverse(global, scale)?,
        Reversal::Disabled => global,
    };
    let adv_logits = affine_row(g, adv_in, vars.adv_head)?;
    let adv = g.softmax_lastaxis(adv_logits);
    let y_dprime = g.reshape(adv, vec![2])?;

    Ok(ForwardTrace {
        s_prime,
        g: global,
        u_sent,
        o_sent,
        o_prime,
        u_para,
        o_p,
        y_prime,
        y_dprime,
    })
}

/// The two loss branches and their sum.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    /// Binary cross-entropy of the main head.
    pub bce: Var,
    /// Cross-entropy of the adversarial head.
    pub ce: Var,
    /// `bce + ce`; the adversarial weighting lives in the reversal node.
    pub total: Var,
}

pub fn sirm_loss<T: Real>(
    g: &mut Graph<'_, T>,
    trace: &ForwardTrace,
    label: u8,
) -> Result<LossTerms> {
    let bce = g.binary_cross_entropy(trace.y_prime, label)?;
    let ce = g.nll(trace.y_dprime, label as usize)?;
    let total = g.add(bce, ce)?;
    Ok(LossTerms { bce, ce, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::SirmParams;
    use crate::tensor::Tensor;
    use crate::text::{PAD_ID, UNK_ID};

    fn toy_config() -> SirmConfig {
        SirmConfig {
            d_e: 4,
            d_c: 4,
            src_windows: vec![1, 2, 3, 4],
            k: 1,
            d_ns: 4,
            d_np: 4,
            d_as: 4,
            d_ap: 4,
            lambda: 1e-6,
            m: 2,
            n: 3,
            vocab_size: 8,
            mask_aware_pooling: false,
        }
    }

    fn toy_grid() -> ParagraphGrid {
        ParagraphGrid {
            m: 2,
            n: 3,
            token_ids: vec![2, 3, 4, 5, UNK_ID, PAD_ID],
            word_mask: vec![true, true, true, true, true, false],
            sentence_mask: vec![true, true],
            label: 1,
        }
    }

    #[test]
    fn zero_heads_give_uninformed_outputs() {
        let config = toy_config();
        let mut params = SirmParams::<f64>::init(&config, 0).unwrap();
        params.out_head.weight = Tensor::zeros(vec![4 + 16, 1]);
        params.adv_head.weight = Tensor::zeros(vec![16, 2]);
        let mut g = Graph::new();
        let vars = params.register(&mut g);
        let trace = sirm_forward(&mut g, &vars, &toy_grid(), &config).unwrap();
        assert_eq!(g.value(trace.y_prime), &[0.5]);
        assert_eq!(g.value(trace.y_dprime), &[0.5, 0.5]);
        let loss = sirm_loss(&mut g, &trace, 1).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((g.value(loss.bce)[0] - ln2).abs() < 1e-15);
        assert!((g.value(loss.ce)[0] - ln2).abs() < 1e-15);
    }

    #[test]
    fn trace_shapes() {
        let config = toy_config();
        let params = SirmParams::<f32>::init(&config, 1).unwrap();
        let mut g = Graph::new();
        let vars = params.register(&mut g);
        let t = sirm_forward(&mut g, &vars, &toy_grid(), &config).unwrap();
        assert_eq!(g.shape(t.s_prime), &[2, 3, 4]);
        assert_eq!(g.shape(t.g), &[16]);
        assert_eq!(g.shape(t.u_sent), &[2, 3, 4]);
        assert_eq!(g.shape(t.o_sent), &[2, 4]);
        assert_eq!(g.shape(t.o_prime), &[2, 4]);
        assert_eq!(g.shape(t.u_para), &[2, 4]);
        assert_eq!(g.shape(t.o_p), &[4]);
        assert_eq!(g.value(t.y_prime).len(), 1);
        let adv: f32 = g.value(t.y_dprime).iter().sum();
        assert!((adv - 1.0).abs() < 1e-6);
    }

    #[test]
    fn grid_shape_must_match_config() {
        let config = SirmConfig {
            m: 3,
            ..toy_config()
        };
        let params = SirmParams::<f32>::init(&config, 1).unwrap();
        let mut g = Graph::new();
        let vars = params.register(&mut g);
        assert!(matches!(
            sirm_forward(&mut g, &vars, &toy_grid(), &config),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn zero_table_embeds_to_positions() {
        let mut g = Graph::<f64>::new();
        let table = g.leaf(Tensor::zeros(vec![8, 4]));
        let s = embed_paragraph(&mut g, table, &toy_grid(), 4).unwrap();
        let pe = positional_encoding::<f64>(3, 4).unwrap();
        assert_eq!(&g.value(s)[..12], pe.data());
        assert_eq!(&g.value(s)[12..], pe.data());

        let one = ParagraphGrid {
            m: 1,
            n: 1,
            token_ids: vec![2],
            word_mask: vec![true],
            sentence_mask: vec![true],
            label: 0,
        };
        let s = embed_paragraph(&mut g, table, &one, 4).unwrap();
        assert_eq!(g.value(s), &[0.0, 1.0, 0.0, 1.0]);

        let bad = ParagraphGrid {
            token_ids: vec![9],
            ..one
        };
        assert!(matches!(
            embed_paragraph(&mut g, table, &bad, 4),
            Err(Error::Lookup { id: 9, .. })
        ));
    }

    #[test]
    fn skim_of_zeros_is_zero() {
        let config = toy_config();
        let params = SirmParams::<f64>::zeros(&config).unwrap();
        let mut g = Graph::new();
        let vars = params.register(&mut g);
        let p = g.leaf(Tensor::zeros(vec![6, 4]));
        let out = skim_forward(&mut g, p, &vars.src_filters).unwrap();
        assert_eq!(g.value(out), &[0.0; 16]);
    }

    #[test]
    fn skim_with_identity_unigram_is_column_mean() {
        let mut g = Graph::<f64>::new();
        let data = [1.0, 2.0, 3.0, 0.5, 0.0, 4.0];
        let p = g.leaf(Tensor::new(vec![3, 2], data.to_vec()).unwrap());
        let w = g.leaf(Tensor::new(vec![1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = g.leaf(Tensor::zeros(vec![2]));
        let out = skim_forward(&mut g, p, &[AffineVars { weight: w, bias: b }]).unwrap();
        let v = g.value(out);
        assert!((v[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((v[1] - 6.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn near_neighbor_single_row_and_zeros() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::from_fn(vec![3, 2, 2], |i| i as f64 * 0.1 - 0.5));
        let b = g.leaf(Tensor::zeros(vec![2]));
        let weights = AffineVars { weight: w, bias: b };

        let x = g.leaf(Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap());
        let u = near_neighbor_encode(&mut g, x, weights, 1).unwrap();
        // Only the centre tap sees a real row.
        let wv = g.value(w);
        let expect: Vec<f64> = (0..2)
            .map(|o| (1.0 * wv[4 + o] - 2.0 * wv[4 + 2 + o]).max(0.0))
            .collect();
        assert_eq!(g.value(u), expect.as_slice());

        let z = g.leaf(Tensor::zeros(vec![5, 2]));
        let u = near_neighbor_encode(&mut g, z, weights, 1).unwrap();
        assert_eq!(g.value(u), &[0.0; 10]);

        assert!(near_neighbor_encode(&mut g, z, weights, 2).is_err());
    }

    #[test]
    fn dense_zero_weights_and_single_row() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_fn(vec![3, 2], |i| i as f64));
        let u = g.leaf(Tensor::from_fn(vec![3, 2], |i| -(i as f64)));
        let glob = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let w = g.leaf(Tensor::zeros(vec![6, 3]));
        let b = g.leaf(Tensor::zeros(vec![3]));
        let weights = AffineVars { weight: w, bias: b };
        let out = dense_connect_pool(&mut g, x, u, glob, weights, None, PoolDenominator::FixedLen)
            .unwrap();
        assert_eq!(g.value(out), &[0.0; 3]);

        let w = g.leaf(Tensor::from_fn(vec![6, 3], |i| (i as f64 * 0.37).sin()));
        let weights = AffineVars { weight: w, bias: b };
        let x1 = g.slice_rows(x, 1, 1).unwrap();
        let u1 = g.slice_rows(u, 1, 1).unwrap();
        let pooled = dense_connect_pool(
            &mut g,
            x1,
            u1,
            glob,
            weights,
            None,
            PoolDenominator::FixedLen,
        )
        .unwrap();
        let u1v = g.reshape(u1, vec![2]).unwrap();
        let x1v = g.reshape(x1, vec![2]).unwrap();
        let t = g.concat_lastaxis(&[glob, u1v, x1v]).unwrap();
        let direct = affine_row(&mut g, t, weights).unwrap();
        let direct = g.relu(direct);
        assert_eq!(g.value(pooled), g.value(direct));
        assert!(g.value(pooled).iter().any(|&v| v != 0.0));

        let bad_w = g.leaf(Tensor::zeros(vec![5, 3]));
        let bad = AffineVars {
            weight: bad_w,
            bias: b,
        };
        assert!(
            dense_connect_pool(&mut g, x, u, glob, bad, None, PoolDenominator::FixedLen).is_err()
        );
    }

    #[test]
    fn lambda_changes_gradients_not_values() {
        let base = toy_config();
        let mut values = Vec::new();
        let mut src_grads = Vec::new();
        for lambda in [0.0, 1e-6] {
            let config = SirmConfig {
                lambda,
                ..base.clone()
            };
            let params = SirmParams::<f64>::init(&config, 5).unwrap();
            let mut g = Graph::new();
            let vars = params.register(&mut g);
            let trace = sirm_forward(&mut g, &vars, &toy_grid(), &config).unwrap();
            let loss = sirm_loss(&mut g, &trace, 0).unwrap();
            values.push((
                g.value(trace.y_prime).to_vec(),
                g.value(trace.y_dprime).to_vec(),
                g.value(loss.total).to_vec(),
            ));
            let grads = g.backward(loss.total).unwrap();
            src_grads.push(grads.get(vars.src_filters[0].weight).unwrap().to_vec());
        }
        assert_eq!(values[0], values[1]);
        assert_ne!(src_grads[0], src_grads[1]);
    }

    #[test]
    fn mask_aware_pooling_ignores_padding() {
        let config = SirmConfig {
            mask_aware_pooling: true,
            ..toy_config()
        };
        let params = SirmParams::<f64>::init(&config, 2).unwrap();
        let mut g = Graph::new();
        let vars = params.register(&mut g);
        let trace = sirm_forward(&mut g, &vars, &toy_grid(), &config).unwrap();
        assert!(g.value(trace.y_prime)[0].is_finite());

        let empty_second = ParagraphGrid {
            token_ids: vec![2, 3, 0, 0, 0, 0],
            word_mask: vec![true, true, false, false, false, false],
            sentence_mask: vec![true, false],
            ..toy_grid()
        };
        let trace = sirm_forward(&mut g, &vars, &empty_second, &config).unwrap();
        assert!(g.value(trace.y_prime)[0].is_finite());
    }
}
