//! Finite-difference verification of the full model gradient.
//!
//! Gradient reversal makes the reversed gradient differ from the derivative
//! of any scalar, so the check differentiates `bce + ce` with reversal
//! disabled; the reversal itself is covered by comparing the two loss
//! branches separately.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SirmConfig;
use super::params::{Parameters, SirmParams};
use super::sirm::{sirm_forward_with, sirm_loss, Reversal};
use crate::error::{Error, Result};
use crate::tensor::{max_relative_error, Graph};
use crate::text::{ParagraphGrid, PAD_ID, UNK_ID};

/// ReLU inputs closer than this to zero trigger a resample.
pub const KINK_MARGIN: f64 = 1e-3;
pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
const MAX_RESAMPLES: u64 = 1000;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error per parameter tensor.
    pub per_tensor: Vec<(String, f64)>,
    pub max_error: f64,
    /// Seed of the parameter draw that was checked.
    pub seed: u64,
}

impl GradCheckReport {
    pub fn failures(&self, tolerance: f64) -> Vec<&str> {
        self.per_tensor
            .iter()
            .filter(|(_, e)| e.partial_cmp(&tolerance) != Some(std::cmp::Ordering::Less))
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// Two sentences of three words, every width 4.
pub fn toy_config() -> SirmConfig {
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

/// A random fully or partially filled grid matching `config`.
pub fn random_grid(config: &SirmConfig, rng: &mut impl Rng) -> ParagraphGrid {
    let (m, n) = (config.m, config.n);
    let mut grid = ParagraphGrid {
        m,
        n,
        token_ids: vec![PAD_ID; m * n],
        word_mask: vec![false; m * n],
        sentence_mask: vec![false; m],
        label: rng.random_range(0..2),
    };
    let sentences = rng.random_range(1..=m);
    for i in 0..sentences {
        let words = rng.random_range(1..=n);
        grid.sentence_mask[i] = true;
        for j in 0..words {
            grid.token_ids[i * n + j] = rng.random_range(UNK_ID..config.vocab_size);
            grid.word_mask[i * n + j] = true;
        }
    }
    grid
}

fn loss_value(
    params: &SirmParams<f64>,
    grid: &ParagraphGrid,
    config: &SirmConfig,
) -> Result<(f64, f64)> {
    let mut g = Graph::new();
    let vars = params.register(&mut g);
    let trace = sirm_forward_with(&mut g, &vars, grid, config, Reversal::Disabled)?;
    let loss = sirm_loss(&mut g, &trace, grid.label)?;
    let kink = g.min_abs_relu_input().unwrap_or(f64::INFINITY);
    Ok((g.scalar_value(loss.total)?, kink))
}

/// Draws parameters whose ReLU inputs all sit at least [`KINK_MARGIN`] away
/// from zero, starting at `seed`.
pub fn kink_free_params(
    config: &SirmConfig,
    grid: &ParagraphGrid,
    seed: u64,
) -> Result<(SirmParams<f64>, u64)> {
    for s in seed..seed + MAX_RESAMPLES {
        let params = SirmParams::<f64>::init(config, s)?;
        let (_, kink) = loss_value(&params, grid, config)?;
        if kink >= KINK_MARGIN {
            return Ok((params, s));
        }
    }
    Err(Error::Training(format!(
        "no kink-free parameter draw within {MAX_RESAMPLES} seeds"
    )))
}

/// Central-difference check of every parameter tensor at 64-bit precision.
pub fn full_grad_check(
    config: &SirmConfig,
    grid: &ParagraphGrid,
    seed: u64,
    eps: f64,
) -> Result<GradCheckReport> {
    config.validate()?;
    let (mut params, seed) = kink_free_params(config, grid, seed)?;

    let analytic: Vec<Vec<f64>> = {
        let mut g = Graph::new();
        let vars = params.register(&mut g);
        let trace = sirm_forward_with(&mut g, &vars, grid, config, Reversal::Disabled)?;
        let loss = sirm_loss(&mut g, &trace, grid.label)?;
        let grads = g.backward(loss.total)?;
        vars.ordered()
            .into_iter()
            .zip(params.tensors())
            .map(|(v, (_, t))| {
                grads
                    .get(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; t.numel()])
            })
            .collect()
    };

    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let mut per_tensor = Vec::with_capacity(names.len());
    for (ti, name) in names.into_iter().enumerate() {
        let len = analytic[ti].len();
        let mut numeric = Vec::with_capacity(len);
        for idx in 0..len {
            let original = params.tensors()[ti].1.data()[idx];
            let mut at = |value: f64| -> Result<f64> {
                params.tensors_mut()[ti].1.data_mut()[idx] = value;
                Ok(loss_value(&params, grid, config)?.0)
            };
            let plus = at(original + eps)?;
            let minus = at(original - eps)?;
            at(original)?;
            numeric.push((plus - minus) / (2.0 * eps));
        }
        per_tensor.push((name, max_relative_error(&analytic[ti], &numeric)));
    }
    let max_error = per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_tensor,
        max_error,
        seed,
    })
}

/// Toy-configuration check used by the command line and acceptance suite.
pub fn toy_grad_check(seed: u64) -> Result<GradCheckReport> {
    seeded_grad_check(&toy_config(), seed)
}

/// Checks `config` on a seeded random grid with every word slot filled.
pub fn seeded_grad_check(config: &SirmConfig, seed: u64) -> Result<GradCheckReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = random_grid(config, &mut rng);
    // Both sentences populated so every path carries signal.
    for i in 0..config.m * config.n {
        if !grid.word_mask[i] {
            grid.word_mask[i] = true;
            grid.token_ids[i] = rng.random_range(UNK_ID..config.vocab_size);
        }
    }
    grid.sentence_mask = vec![true; config.m];
    full_grad_check(config, &grid, seed, DEFAULT_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_check_passes() {
        let report = toy_grad_check(0).unwrap();
        assert!(
            report.max_error < DEFAULT_TOLERANCE,
            "{:?}",
            report.per_tensor
        );
        assert_eq!(report.per_tensor.len(), 1 + 2 * (4 + 6));
    }

    #[test]
    fn random_grids_are_valid() {
        let config = toy_config();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            random_grid(&config, &mut rng)
                .validate(config.vocab_size)
                .unwrap();
        }
    }
}
