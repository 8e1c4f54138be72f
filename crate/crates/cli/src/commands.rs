use std::path::{Path, PathBuf};

use log::{info, warn};
use serde_json::json;
use sirm_core::eval::{
    encode_split, evaluate, evaluate_grids, metrics_json, predictions_tsv, Evaluation, NbowModel,
};
use sirm_core::io::write_atomic;
use sirm_core::model::check::seeded_grad_check;
use sirm_core::model::{param_count, Classifier, SirmConfig, SirmModel, SirmParams};
use sirm_core::tensor::Real;
use sirm_core::text::{
    generate_incongruity, load_dataset, DataFormat, DatasetSplit, SplitName, Vocabulary,
};
use sirm_core::train::{history_jsonl, load_checkpoint, save_checkpoint, train, LoadedModel};
use sirm_core::Error;

use crate::config::{ModelKind, Precision, RunConfig};
use crate::error::{CliError, CliResult};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.sirm";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const DEV_METRICS_FILE: &str = "dev_metrics.json";
pub const TRAIN_METRICS_FILE: &str = "train_metrics.json";

fn load(path: &Path, name: SplitName) -> CliResult<DatasetSplit> {
    let (split, _) = load_dataset(path, DataFormat::from_path(path), name)?;
    if split.is_empty() {
        return Err(Error::Empty(format!("{} has no examples", path.display())).into());
    }
    Ok(split)
}

pub fn build_vocab(train: &Path, out: &Path, min_freq: u64, max_size: usize) -> CliResult<()> {
    let split = load(train, SplitName::Train)?;
    let vocab = Vocabulary::build(&split, min_freq, max_size)?;
    if vocab.len() <= 2 {
        warn!("vocabulary holds only the reserved tokens; every word maps to <unk>");
    }
    vocab.save(out)?;
    println!("vocabulary size: {}", vocab.len());
    println!("train token coverage: {:.4}", vocab.coverage(&split));
    Ok(())
}

struct TrainInputs {
    train: DatasetSplit,
    dev: DatasetSplit,
    vocab: Vocabulary,
}

fn prepare(config: &RunConfig, out_dir: &Path) -> CliResult<TrainInputs> {
    let train_path =
        config.run.train.as_deref().ok_or_else(|| {
            CliError::Usage("no training data given (--train or \"train\")".into())
        })?;
    let mut train = load(train_path, SplitName::Train)?;
    let dev = match &config.run.dev {
        Some(p) => load(p, SplitName::Dev)?,
        None => {
            let (rest, dev) = train.split_off_dev(config.run.dev_fraction, config.train.seed);
            info!(
                "no dev file; holding out {} of {} training examples",
                dev.len(),
                train.len()
            );
            train = rest;
            dev
        }
    };
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Empty("train or dev split is empty after the dev split".into()).into());
    }
    let vocab = match &config.run.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => {
            let v = Vocabulary::build(&train, config.run.min_freq, config.run.max_size)?;
            info!("built vocabulary of {} entries", v.len());
            v
        }
    };
    vocab.save(&out_dir.join(VOCAB_FILE))?;
    Ok(TrainInputs { train, dev, vocab })
}

fn fit<T: Real, M: Classifier<T> + Clone>(
    model: M,
    inputs: &TrainInputs,
    config: &RunConfig,
    out_dir: &Path,
) -> CliResult<()> {
    let train_grids = encode_split(&model, &inputs.vocab, &inputs.train)?;
    let dev_grids = encode_split(&model, &inputs.vocab, &inputs.dev)?;
    let outcome = train(model, &train_grids, &dev_grids, &config.train, |r| {
        println!(
            "epoch {:>3}  loss {:.4}  dev acc {:.4}  dev f1 {:.4}  dev macro-f1 {:.4}",
            r.epoch, r.train_loss, r.dev_acc, r.dev_f1, r.dev_macro_f1
        );
    })?;
    let dev_eval = evaluate_grids(&outcome.best, &dev_grids, 0.5)?;
    let train_eval = evaluate_grids(&outcome.best, &train_grids, 0.5)?;

    save_checkpoint(&outcome.best, &out_dir.join(CHECKPOINT_FILE))?;
    write_atomic(
        &out_dir.join(HISTORY_FILE),
        history_jsonl(&outcome.history).as_bytes(),
    )?;
    write_atomic(
        &out_dir.join(DEV_METRICS_FILE),
        metrics_json(&dev_eval.metrics).as_bytes(),
    )?;
    write_atomic(
        &out_dir.join(TRAIN_METRICS_FILE),
        metrics_json(&train_eval.metrics).as_bytes(),
    )?;
    println!(
        "best epoch {} of {}: dev macro-f1 {:.4}, dev acc {:.4}, train acc {:.4}",
        outcome.best_epoch,
        outcome.history.len(),
        dev_eval.metrics.macro_f1,
        dev_eval.metrics.accuracy,
        train_eval.metrics.accuracy
    );
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn fit_with<T: Real>(config: &RunConfig, inputs: &TrainInputs, out_dir: &Path) -> CliResult<()> {
    let seed = config.train.seed;
    match config.run.model {
        ModelKind::Sirm => {
            let model = SirmModel::<T>::init(config.model.clone(), seed)?;
            fit(model, inputs, config, out_dir)
        }
        ModelKind::Nbow => {
            let model = NbowModel::<T>::init(config.nbow(), seed)?;
            fit(model, inputs, config, out_dir)
        }
    }
}

pub fn train_command(mut config: RunConfig) -> CliResult<()> {
    let out_dir = config
        .run
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory given (--out-dir)".into()))?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
        path: out_dir.clone(),
        source: e,
    })?;
    let inputs = prepare(&config, &out_dir)?;
    if config.model.vocab_size != inputs.vocab.len() {
        info!(
            "vocab_size set to {} from the vocabulary",
            inputs.vocab.len()
        );
        config.model.vocab_size = inputs.vocab.len();
    }
    if config.run.model == ModelKind::Sirm {
        config.model.validate()?;
        if config.model.lambda == 0.0 {
            info!(
                "lambda = 0: no gradient flows from the adversarial head into the skim component"
            );
        }
    }
    info!(
        "training {:?} on {} examples, dev {}",
        config.run.model,
        inputs.train.len(),
        inputs.dev.len()
    );
    match config.run.precision {
        Precision::F32 => fit_with::<f32>(&config, &inputs, &out_dir),
        Precision::F64 => fit_with::<f64>(&config, &inputs, &out_dir),
    }
}

fn default_vocab(checkpoint: &Path) -> PathBuf {
    checkpoint
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(VOCAB_FILE)
}

fn score(
    checkpoint: &Path,
    vocab: Option<&Path>,
    data: &Path,
    threshold: f64,
) -> CliResult<Evaluation> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::Usage(format!(
            "threshold must lie in [0, 1], got {threshold}"
        )));
    }
    let model = load_checkpoint(checkpoint)?;
    let vocab_path = vocab
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_vocab(checkpoint));
    let vocab = Vocabulary::load(&vocab_path)?;
    let split = load(data, SplitName::Test)?;
    Ok(match &model {
        LoadedModel::Sirm(m) => evaluate(m, &vocab, &split, threshold)?,
        LoadedModel::Nbow(m) => evaluate(m, &vocab, &split, threshold)?,
    })
}

pub fn eval_command(
    checkpoint: &Path,
    vocab: Option<&Path>,
    data: &Path,
    threshold: f64,
    out: Option<&Path>,
) -> CliResult<()> {
    let evaluation = score(checkpoint, vocab, data, threshold)?;
    let text = metrics_json(&evaluation.metrics);
    if let Some(out) = out {
        write_atomic(out, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

pub fn predict_command(
    checkpoint: &Path,
    vocab: Option<&Path>,
    data: &Path,
    threshold: f64,
    out: &Path,
) -> CliResult<()> {
    let evaluation = score(checkpoint, vocab, data, threshold)?;
    write_atomic(out, predictions_tsv(&evaluation.predictions).as_bytes())?;
    println!(
        "wrote {} predictions to {}",
        evaluation.predictions.len(),
        out.display()
    );
    Ok(())
}

pub const GRAD_TOLERANCE: f64 = 1e-4;

pub fn grad_check_command(config: &SirmConfig, seed: u64) -> CliResult<()> {
    let report = seeded_grad_check(config, seed)?;
    for (name, err) in &report.per_tensor {
        println!("{name:<24} {err:.3e}");
    }
    println!("max relative error: {:.3e}", report.max_error);
    let failures = report.failures(GRAD_TOLERANCE);
    if failures.is_empty() {
        println!("PASS (tolerance {GRAD_TOLERANCE:e})");
        Ok(())
    } else {
        Err(CliError::GradCheck(
            failures.into_iter().map(str::to_string).collect(),
        ))
    }
}

pub fn param_count_command(config: &SirmConfig) -> CliResult<()> {
    let params = SirmParams::<f32>::zeros(config)?;
    let value = json!({
        "without_embeddings": param_count(&params, false),
        "with_embeddings": param_count(&params, true),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&value).expect("json serializes")
    );
    Ok(())
}

pub fn synthetic_command(
    out_dir: &Path,
    train_size: usize,
    dev_size: usize,
    seed: u64,
) -> CliResult<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let train = generate_incongruity(train_size, seed, SplitName::Train);
    let dev = generate_incongruity(dev_size, seed + 1, SplitName::Dev);
    train.save_jsonl(&out_dir.join("train.jsonl"))?;
    dev.save_jsonl(&out_dir.join("dev.jsonl"))?;
    println!(
        "wrote {} train and {} dev examples to {}",
        train.len(),
        dev.len(),
        out_dir.display()
    );
    Ok(())
}
