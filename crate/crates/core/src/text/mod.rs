//! Raw text to fixed-shape paragraph grids.

mod dataset;
mod grid;
mod synthetic;
mod tokenize;
mod vocab;

pub use dataset::{
    load_dataset, parse_dataset, DataFormat, DatasetSplit, Example, LoadReport, SplitName,
    MAX_MALFORMED_FRACTION,
};
pub use grid::{grid_encode, ParagraphGrid};
pub use synthetic::{generate_incongruity, SYNTHETIC_M, SYNTHETIC_N};
pub use tokenize::{segment_sentences, tokenize, SENTENCE_END, URL_TOKEN, USER_TOKEN};
pub use vocab::{
    Vocabulary, DEFAULT_MAX_SIZE, DEFAULT_MIN_FREQUENCY, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN,
};
