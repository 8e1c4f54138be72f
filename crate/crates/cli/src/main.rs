//! `sirm`: build vocabularies, train, evaluate and verify SIRM classifiers.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use sirm_core::text::{DEFAULT_MAX_SIZE, DEFAULT_MIN_FREQUENCY};

use config::{resolve, ConfigOverrides, SEED_ENV};
use error::{CliResult, EXIT_USAGE};

#[derive(Parser, Debug)]
#[command(
    name = "sirm",
    version,
    about = "Skim and Intensive Reading Model for implied-meaning classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a vocabulary file from training data
    BuildVocab {
        /// Training data (.jsonl, or .tsv with label<TAB>text)
        #[arg(long)]
        train: PathBuf,
        /// Output vocabulary file
        #[arg(long)]
        out: PathBuf,
        /// Minimum token frequency
        #[arg(long, default_value_t = DEFAULT_MIN_FREQUENCY)]
        min_freq: u64,
        /// Maximum entries, including <pad> and <unk>
        #[arg(long, default_value_t = DEFAULT_MAX_SIZE)]
        max_size: usize,
    },
    /// Train a model and write checkpoint, vocabulary, history and metrics
    ///
    /// Defaults: d_c 16, windows 1-4, k 1, widths 64, lambda 1e-6, learning
    /// rate 1e-3, batch 64.
    Train {
        /// Flat JSON config with model, optimizer and run keys
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training data
        #[arg(long)]
        train: Option<PathBuf>,
        /// Dev data; without it a seeded share of --train is held out
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Existing vocabulary; built from --train when absent
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Score a checkpoint on labelled data and print metrics JSON
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labelled data to score
        #[arg(long)]
        data: PathBuf,
        /// Vocabulary [default: vocab.txt next to the checkpoint]
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Probability at or above which an example is positive
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Also write the metrics JSON here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-example predictions as TSV: index, probability, predicted, gold
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Predictions file
        #[arg(long)]
        out: PathBuf,
        /// Vocabulary [default: vocab.txt next to the checkpoint]
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Probability at or above which an example is positive
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Finite-difference check of every model gradient at 64-bit precision
    ///
    /// Without --config a toy model is used: 2 sentences of 3 words, all
    /// widths 4, vocabulary 8.
    GradCheck {
        /// Flat JSON model config
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for the parameter draw and the input grid
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print parameter totals with and without the embedding table
    ParamCount {
        /// Flat JSON model config [default: built-in defaults]
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Generate the synthetic incongruity dataset
    Synthetic {
        /// Directory for train.jsonl and dev.jsonl
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 64)]
        train_size: usize,
        #[arg(long, default_value_t = 64)]
        dev_size: usize,
        /// The dev split uses seed + 1
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::BuildVocab {
            train,
            out,
            min_freq,
            max_size,
        } => commands::build_vocab(&train, &out, min_freq, max_size),
        Command::Train {
            config,
            train,
            dev,
            vocab,
            out_dir,
            overrides,
        } => {
            let mut run = resolve(config.as_deref(), &overrides, env_seed().as_deref())?;
            for (slot, flag) in [
                (&mut run.run.train, train),
                (&mut run.run.dev, dev),
                (&mut run.run.vocab, vocab),
                (&mut run.run.out_dir, out_dir),
            ] {
                if flag.is_some() {
                    *slot = flag;
                }
            }
            commands::train_command(run)
        }
        Command::Eval {
            checkpoint,
            data,
            vocab,
            threshold,
            out,
        } => commands::eval_command(
            &checkpoint,
            vocab.as_deref(),
            &data,
            threshold,
            out.as_deref(),
        ),
        Command::Predict {
            checkpoint,
            data,
            out,
            vocab,
            threshold,
        } => commands::predict_command(&checkpoint, vocab.as_deref(), &data, threshold, &out),
        Command::GradCheck { config, seed } => {
            let model = match config {
                Some(path) => resolve(Some(&path), &ConfigOverrides::default(), None)?.model,
                None => sirm_core::model::check::toy_config(),
            };
            commands::grad_check_command(&model, seed)
        }
        Command::ParamCount { config, overrides } => {
            let run = resolve(config.as_deref(), &overrides, None)?;
            commands::param_count_command(&run.model)
        }
        Command::Synthetic {
            out_dir,
            train_size,
            dev_size,
            seed,
        } => commands::synthetic_command(&out_dir, train_size, dev_size, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::CliError;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_map_to_one() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
    }
}
