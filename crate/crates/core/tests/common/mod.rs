//! Shared helpers for the integration tests: plain-loop reference
//! implementations, finite differences and the bundled synthetic data.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sirm_core::model::{SirmConfig, SirmParams};
use sirm_core::text::{
    grid_encode, load_dataset, DataFormat, DatasetSplit, ParagraphGrid, SplitName, Vocabulary,
    SYNTHETIC_M, SYNTHETIC_N,
};
use sirm_core::train::TrainConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Dimensions of a convolution kernel `[h×d_in×d_out]`.
#[derive(Clone, Copy, Debug)]
pub struct Kernel {
    pub h: usize,
    pub d_in: usize,
    pub d_out: usize,
}

/// `out[t][o] = b[o] + Σ_j Σ_c x[t + j - pad][c] · w[j][c][o]`, reading zeros
/// outside `x`.
pub fn conv_loop(
    x: &[f64],
    len: usize,
    w: &[f64],
    b: &[f64],
    k: Kernel,
    pad: usize,
    len_out: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; len_out * k.d_out];
    for t in 0..len_out {
        for o in 0..k.d_out {
            let mut acc = b[o];
            for j in 0..k.h {
                let row = t as isize + j as isize - pad as isize;
                if row < 0 || row as usize >= len {
                    continue;
                }
                for c in 0..k.d_in {
                    acc += x[row as usize * k.d_in + c] * w[(j * k.d_in + c) * k.d_out + o];
                }
            }
            out[t * k.d_out + o] = acc;
        }
    }
    out
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Column means of `rows×d` weighted by `mask` (all rows when `None`), divided
/// by `rows` or by the number of selected rows.
pub fn pool_loop(
    x: &[f64],
    rows: usize,
    d: usize,
    mask: Option<&[bool]>,
    by_count: bool,
) -> Vec<f64> {
    let selected: Vec<bool> = match mask {
        Some(m) => m.to_vec(),
        None => vec![true; rows],
    };
    let denom = if by_count {
        selected.iter().filter(|&&s| s).count()
    } else {
        rows
    } as f64;
    let mut out = vec![0.0; d];
    for r in 0..rows {
        if by_count && !selected[r] {
            continue;
        }
        for c in 0..d {
            out[c] += x[r * d + c];
        }
    }
    out.iter_mut().for_each(|v| *v /= denom);
    out
}

/// Skim vector: relu of each valid convolution, averaged over its windows.
pub fn skim_loop(
    p_hat: &[f64],
    len: usize,
    d_e: usize,
    filters: &[(Vec<f64>, Vec<f64>, Kernel)],
) -> Vec<f64> {
    let mut g = Vec::new();
    for (w, b, k) in filters {
        let len_out = len - k.h + 1;
        let mut c = conv_loop(p_hat, len, w, b, *k, 0, len_out);
        relu(&mut c);
        assert_eq!(k.d_in, d_e);
        g.extend(pool_loop(&c, len_out, k.d_out, None, false));
    }
    g
}

/// Zero-padded `2k+1` convolution with relu.
pub fn neighbor_loop(
    x: &[f64],
    len: usize,
    w: &[f64],
    b: &[f64],
    kern: Kernel,
    k: usize,
) -> Vec<f64> {
    let mut u = conv_loop(x, len, w, b, kern, k, len);
    relu(&mut u);
    u
}

/// `mean_j relu(W·[g ⊕ u_j ⊕ x_j] + b)`.
#[allow(clippy::too_many_arguments)]
pub fn dense_loop(
    x: &[f64],
    d_x: usize,
    u: &[f64],
    d_u: usize,
    g: &[f64],
    w: &[f64],
    b: &[f64],
    rows: usize,
    mask: Option<&[bool]>,
    by_count: bool,
) -> Vec<f64> {
    let d_out = b.len();
    let d_in = g.len() + d_u + d_x;
    let mut z = vec![0.0; rows * d_out];
    for r in 0..rows {
        let t: Vec<f64> = g
            .iter()
            .chain(&u[r * d_u..(r + 1) * d_u])
            .chain(&x[r * d_x..(r + 1) * d_x])
            .copied()
            .collect();
        for o in 0..d_out {
            let mut acc = b[o];
            for i in 0..d_in {
                acc += t[i] * w[i * d_out + o];
            }
            z[r * d_out + o] = acc.max(0.0);
        }
    }
    pool_loop(&z, rows, d_out, mask, by_count)
}

/// `sin`/`cos` position table evaluated directly.
pub fn position_loop(len: usize, d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len * d);
    for pos in 0..len {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            out.push(angle.sin());
            out.push(angle.cos());
        }
    }
    out
}

fn kernel_of(w: &sirm_core::tensor::Tensor<f64>) -> Kernel {
    let s = w.shape();
    Kernel {
        h: s[0],
        d_in: s[1],
        d_out: s[2],
    }
}

/// Loop-based forward pass of the whole network: `(y′, y″)`.
pub fn sirm_loop(
    params: &SirmParams<f64>,
    grid: &ParagraphGrid,
    config: &SirmConfig,
) -> (f64, [f64; 2]) {
    let (m, n, d_e) = (config.m, config.n, config.d_e);
    let len = m * n;
    let pe = position_loop(n, d_e);
    let emb = params.embedding.data();
    let mut p_hat = vec![0.0; len * d_e];
    for r in 0..len {
        let id = grid.token_ids[r];
        for c in 0..d_e {
            p_hat[r * d_e + c] = emb[id * d_e + c] + pe[(r % n) * d_e + c];
        }
    }
    let filters: Vec<_> = params
        .src_filters
        .iter()
        .map(|a| {
            (
                a.weight.data().to_vec(),
                a.bias.data().to_vec(),
                kernel_of(&a.weight),
            )
        })
        .collect();
    let g = skim_loop(&p_hat, len, d_e, &filters);

    let aware = config.mask_aware_pooling;
    let mut o_sent = Vec::with_capacity(m * config.d_as);
    for i in 0..m {
        let x = &p_hat[i * n * d_e..(i + 1) * n * d_e];
        let sn = &params.sent_neighbor;
        let u = neighbor_loop(
            x,
            n,
            sn.weight.data(),
            sn.bias.data(),
            kernel_of(&sn.weight),
            config.k,
        );
        let by_count = aware && grid.sentence_mask[i];
        let mask = &grid.word_mask[i * n..(i + 1) * n];
        let sd = &params.sent_dense;
        o_sent.extend(dense_loop(
            x,
            d_e,
            &u,
            config.d_ns,
            &g,
            sd.weight.data(),
            sd.bias.data(),
            n,
            Some(mask),
            by_count,
        ));
    }
    let pe_s = position_loop(m, config.d_as);
    let o_prime: Vec<f64> = o_sent.iter().zip(&pe_s).map(|(a, b)| a + b).collect();
    let pn = &params.para_neighbor;
    let u_para = neighbor_loop(
        &o_prime,
        m,
        pn.weight.data(),
        pn.bias.data(),
        kernel_of(&pn.weight),
        config.k,
    );
    let pd = &params.para_dense;
    let o_p = dense_loop(
        &o_prime,
        config.d_as,
        &u_para,
        config.d_np,
        &g,
        pd.weight.data(),
        pd.bias.data(),
        m,
        Some(&grid.sentence_mask),
        aware,
    );

    let joined: Vec<f64> = o_p.iter().chain(&g).copied().collect();
    let ow = params.out_head.weight.data();
    let logit =
        params.out_head.bias.data()[0] + joined.iter().zip(ow).map(|(a, b)| a * b).sum::<f64>();
    let y = 1.0 / (1.0 + (-logit).exp());

    let aw = params.adv_head.weight.data();
    let ab = params.adv_head.bias.data();
    let mut z = [ab[0], ab[1]];
    for (i, gi) in g.iter().enumerate() {
        z[0] += gi * aw[i * 2];
        z[1] += gi * aw[i * 2 + 1];
    }
    let top = z[0].max(z[1]);
    let e = [(z[0] - top).exp(), (z[1] - top).exp()];
    let s = e[0] + e[1];
    (y, [e[0] / s, e[1] / s])
}

/// Central differences of `f` with respect to every coordinate of `x`.
pub fn numeric_gradient(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let plus = f(&probe);
            probe[i] = x[i] - eps;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// Elementwise `|a - b| / max(|a|, |b|, floor)`, maximized.
pub fn max_rel(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn synthetic_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

pub fn bundled_split(file: &str, name: SplitName) -> DatasetSplit {
    let path = synthetic_dir().join(file);
    load_dataset(&path, DataFormat::Jsonl, name)
        .expect("bundled data loads")
        .0
}

/// Bundled train and dev grids with a vocabulary built from train.
pub struct Synthetic {
    pub vocab: Vocabulary,
    pub train: Vec<ParagraphGrid>,
    pub dev: Vec<ParagraphGrid>,
}

pub fn encode(split: &DatasetSplit, vocab: &Vocabulary) -> Vec<ParagraphGrid> {
    split
        .examples
        .iter()
        .map(|e| grid_encode(&e.text, vocab, SYNTHETIC_M, SYNTHETIC_N, e.label))
        .collect()
}

pub fn bundled() -> Synthetic {
    let train = bundled_split("train.jsonl", SplitName::Train);
    let dev = bundled_split("dev.jsonl", SplitName::Dev);
    let vocab = Vocabulary::build(&train, 1, 30_000).expect("vocabulary");
    Synthetic {
        train: encode(&train, &vocab),
        dev: encode(&dev, &vocab),
        vocab,
    }
}

/// Default architecture on the synthetic grid shape.
pub fn synthetic_sirm(vocab_size: usize) -> SirmConfig {
    SirmConfig {
        m: SYNTHETIC_M,
        n: SYNTHETIC_N,
        vocab_size,
        ..SirmConfig::default()
    }
}

/// Default optimizer with a 200-epoch budget and no early stop.
pub fn long_run(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 200,
        early_stop_patience: 200,
        seed,
        ..TrainConfig::default()
    }
}
