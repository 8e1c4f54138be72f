use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_grids, Metrics, DEFAULT_THRESHOLD};
use crate::model::{Classifier, ExampleLoss};
use crate::tensor::Real;
use crate::text::ParagraphGrid;

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean total loss, adversarial term included.
    pub train_loss: f64,
    /// Mean classification (binary cross-entropy) part of the loss.
    pub train_bce: f64,
    pub dev_acc: f64,
    pub dev_f1: f64,
    pub dev_macro_f1: f64,
    pub wall_seconds: f64,
}

impl EpochRecord {
    fn new(epoch: usize, loss: ExampleLoss<f64>, dev: &Metrics, wall_seconds: f64) -> Self {
        EpochRecord {
            epoch,
            train_loss: loss.total,
            train_bce: loss.bce,
            dev_acc: dev.accuracy,
            dev_f1: dev.f1,
            dev_macro_f1: dev.macro_f1,
            wall_seconds,
        }
    }
}

pub fn history_jsonl(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Parameters from the best dev epoch.
    pub best: M,
    /// 1-based.
    pub best_epoch: usize,
    pub best_score: f64,
    pub history: Vec<EpochRecord>,
}

/// Mean loss and mean per-tensor gradient over `batch`, reduced in order.
pub fn batch_gradients<T: Real, M: Classifier<T>>(
    model: &M,
    batch: &[&ParagraphGrid],
) -> Result<(ExampleLoss<T>, Vec<Vec<T>>)> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let mut total = T::zero();
    let mut bce = T::zero();
    let mut sum: Vec<Vec<T>> = model
        .tensors()
        .iter()
        .map(|(_, t)| vec![T::zero(); t.numel()])
        .collect();
    for grid in batch {
        let (loss, grads) = model.loss_and_gradients(grid)?;
        total += loss.total;
        bce += loss.bce;
        for (acc, g) in sum.iter_mut().zip(grads) {
            for (a, x) in acc.iter_mut().zip(g) {
                *a += x;
            }
        }
    }
    let scale = T::one() / T::of(batch.len() as f64);
    for acc in &mut sum {
        acc.iter_mut().for_each(|a| *a *= scale);
    }
    let loss = ExampleLoss {
        total: total * scale,
        bce: bce * scale,
    };
    Ok((loss, sum))
}

fn clip_global_norm<T: Real>(grads: &mut [Vec<T>], max_norm: f64) {
    let norm = grads
        .iter()
        .flatten()
        .map(|g| g.to_f64_lossy().powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = T::of(max_norm / norm);
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
    }
}

/// One optimizer step on `batch`; returns the batch-mean loss before the
/// update. `epoch` and `batch_index` only label divergence errors.
pub fn train_step<T: Real, M: Classifier<T>>(
    model: &mut M,
    state: &mut AdamState<T>,
    batch: &[&ParagraphGrid],
    config: &TrainConfig,
    epoch: usize,
    batch_index: usize,
) -> Result<ExampleLoss<T>> {
    let (loss, mut grads) = batch_gradients(model, batch)?;
    let finite = loss.total.is_finite() && grads.iter().flatten().all(|g| g.is_finite());
    if !finite {
        return Err(Error::Divergence {
            epoch,
            batch: batch_index,
        });
    }
    if let Some(c) = config.clip_norm {
        clip_global_norm(&mut grads, c);
    }
    for ((_, t), g) in model.tensors_mut().into_iter().zip(grads) {
        t.set_grad(g)?;
    }
    adam_step(model, state, &AdamConfig::from(config))?;
    Ok(loss)
}

/// Mini-batch Adam with per-epoch dev evaluation and early stopping.
///
/// The returned parameters are those of the epoch with the highest dev score
/// (earliest wins ties). Training stops after `early_stop_patience` epochs
/// without improvement or at `max_epochs`.
pub fn train<T: Real, M: Classifier<T> + Clone>(
    model: M,
    train: &[ParagraphGrid],
    dev: &[ParagraphGrid],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<M>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split has no examples".into()));
    }
    if dev.is_empty() {
        return Err(Error::Empty("dev split has no examples".into()));
    }
    let mut model = model;
    let mut state = AdamState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut best: Option<(M, usize, f64)> = None;
    let mut history = Vec::new();
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let (mut total, mut bce) = (0.0, 0.0);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&ParagraphGrid> = chunk.iter().map(|&i| &train[i]).collect();
            let loss = train_step(&mut model, &mut state, &batch, config, epoch, b)?;
            total += loss.total.to_f64_lossy() * batch.len() as f64;
            bce += loss.bce.to_f64_lossy() * batch.len() as f64;
        }
        let count = train.len() as f64;
        let dev_metrics = evaluate_grids(&model, dev, DEFAULT_THRESHOLD)?.metrics;
        let record = EpochRecord::new(
            epoch,
            ExampleLoss {
                total: total / count,
                bce: bce / count,
            },
            &dev_metrics,
            started.elapsed().as_secs_f64(),
        );
        info!(
            "epoch {epoch}: loss {:.4} dev acc {:.4} macro-f1 {:.4}",
            record.train_loss, record.dev_acc, record.dev_macro_f1
        );
        on_epoch(&record);
        history.push(record);

        let score = config.selection_metric.of(&dev_metrics);
        if best.as_ref().is_none_or(|(_, _, s)| score > *s) {
            best = Some((model.clone(), epoch, score));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.early_stop_patience {
            break;
        }
    }

    let (best, best_epoch, best_score) =
        best.ok_or_else(|| Error::Training("max_epochs is 0; nothing was trained".into()))?;
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_score,
        history,
    })
}
