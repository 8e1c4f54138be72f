use std::fmt::Write as _;

use serde::Serialize;

use super::metrics::{metrics, Metrics};
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::tensor::Real;
use crate::text::{grid_encode, DatasetSplit, ParagraphGrid, Vocabulary};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub index: usize,
    pub probability: f64,
    pub predicted: u8,
    pub gold: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub predictions: Vec<Prediction>,
}

/// Positive iff `p >= threshold`. A threshold of 1 or more never predicts
/// positive, even when the probability rounds to exactly 1.
pub fn decide(probability: f64, threshold: f64) -> u8 {
    u8::from(threshold < 1.0 && probability >= threshold)
}

pub fn evaluate_grids<T: Real, M: Classifier<T>>(
    model: &M,
    grids: &[ParagraphGrid],
    threshold: f64,
) -> Result<Evaluation> {
    if grids.is_empty() {
        return Err(Error::Empty("evaluation split has no examples".into()));
    }
    let mut predictions = Vec::with_capacity(grids.len());
    for (index, grid) in grids.iter().enumerate() {
        let probability = model.probability(grid)?.to_f64_lossy();
        predictions.push(Prediction {
            index,
            probability,
            predicted: decide(probability, threshold),
            gold: grid.label,
        });
    }
    let preds: Vec<u8> = predictions.iter().map(|p| p.predicted).collect();
    let gold: Vec<u8> = predictions.iter().map(|p| p.gold).collect();
    Ok(Evaluation {
        metrics: metrics(&preds, &gold)?,
        predictions,
    })
}

/// Encodes `split` with the model's grid shape and scores it.
pub fn evaluate<T: Real, M: Classifier<T>>(
    model: &M,
    vocab: &Vocabulary,
    split: &DatasetSplit,
    threshold: f64,
) -> Result<Evaluation> {
    let grids = encode_split(model, vocab, split)?;
    evaluate_grids(model, &grids, threshold)
}

pub fn encode_split<T: Real, M: Classifier<T>>(
    model: &M,
    vocab: &Vocabulary,
    split: &DatasetSplit,
) -> Result<Vec<ParagraphGrid>> {
    let config = model.config();
    if vocab.len() != config.vocab_size() {
        return Err(Error::Mismatch(format!(
            "vocabulary has {} entries but the model expects {}",
            vocab.len(),
            config.vocab_size()
        )));
    }
    let (m, n) = config.grid_shape();
    Ok(split
        .examples
        .iter()
        .map(|e| grid_encode(&e.text, vocab, m, n, e.label))
        .collect())
}

/// One `index<TAB>probability<TAB>predicted<TAB>gold` line per example.
pub fn predictions_tsv(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{}\t{}",
            p.index, p.probability, p.predicted, p.gold
        );
    }
    out
}

pub fn metrics_json(metrics: &Metrics) -> String {
    serde_json::to_string_pretty(metrics).expect("metrics serialize") + "\n"
}
