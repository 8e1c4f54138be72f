//! Optimization, the training loop, and checkpoint files.

mod adam;
mod checkpoint;
mod config;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    checkpoint_from_bytes, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint,
    LoadedModel, MAGIC,
};
pub use config::{SelectionMetric, TrainConfig};
pub use trainer::{batch_gradients, history_jsonl, train, train_step, EpochRecord, TrainOutcome};
