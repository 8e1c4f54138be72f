//! Scoring: metrics, batch evaluation and the bag-of-words baseline.

mod metrics;
mod nbow;
mod report;

pub use metrics::{metrics, ConfusionCounts, Metrics};
pub use nbow::{nbow_probability, NbowConfig, NbowModel};
pub use report::{
    decide, encode_split, evaluate, evaluate_grids, metrics_json, predictions_tsv, Evaluation,
    Prediction, DEFAULT_THRESHOLD,
};
