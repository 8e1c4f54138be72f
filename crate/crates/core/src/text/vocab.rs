use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::dataset::{DatasetSplit, SplitName};
use super::tokenize::tokenize;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

pub const DEFAULT_MIN_FREQUENCY: u64 = 2;
pub const DEFAULT_MAX_SIZE: usize = 30_000;

/// Token ↔ id mapping with `PAD = 0` and `UNK = 1` reserved.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    frequencies: Vec<u64>,
    index: HashMap<String, usize>,
    pub min_frequency: u64,
    pub max_size: usize,
}

impl Vocabulary {
    fn from_entries(entries: Vec<(String, u64)>, min_frequency: u64, max_size: usize) -> Self {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut frequencies = vec![0, 0];
        for (tok, freq) in entries {
            tokens.push(tok);
            frequencies.push(freq);
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            frequencies,
            index,
            min_frequency,
            max_size,
        }
    }

    /// Counts tokens of the training split, keeps those seen at least
    /// `min_frequency` times, most frequent first (ties by first occurrence),
    /// and truncates to `max_size` entries including the reserved two.
    pub fn build(split: &DatasetSplit, min_frequency: u64, max_size: usize) -> Result<Self> {
        if split.name != SplitName::Train {
            return Err(Error::Mismatch(format!(
                "vocabulary must be built from the train split, got {:?}",
                split.name
            )));
        }
        if split.examples.is_empty() {
            return Err(Error::Empty("training corpus".into()));
        }
        if max_size < 2 {
            return Err(Error::Config(format!(
                "max_size must be at least 2 (PAD and UNK), got {max_size}"
            )));
        }
        let mut counts: HashMap<String, (u64, usize)> = HashMap::new();
        let mut order = 0usize;
        for ex in &split.examples {
            for tok in tokenize(&ex.text) {
                let entry = counts.entry(tok).or_insert_with(|| {
                    order += 1;
                    (0, order)
                });
                entry.0 += 1;
            }
        }
        let mut entries: Vec<(String, u64, usize)> = counts
            .into_iter()
            .filter(|(t, (c, _))| *c >= min_frequency && t != PAD_TOKEN && t != UNK_TOKEN)
            .map(|(t, (c, first))| (t, c, first))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        entries.truncate(max_size - 2);
        let entries = entries.into_iter().map(|(t, c, _)| (t, c)).collect();
        Ok(Self::from_entries(entries, min_frequency, max_size))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `token`, or [`UNK_ID`] when it is not in the vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn frequency(&self, id: usize) -> Option<u64> {
        self.frequencies.get(id).copied()
    }

    /// Serialized form: one `token<TAB>frequency` line per id.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (tok, freq) in self.tokens.iter().zip(&self.frequencies) {
            let _ = writeln!(out, "{tok}\t{freq}");
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        };
        let mut entries = Vec::new();
        let mut seen = HashMap::new();
        let mut count = 0;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let (tok, freq) = line
                .split_once('\t')
                .ok_or_else(|| bad(lineno, "expected token<TAB>frequency".into()))?;
            let freq: u64 = freq
                .parse()
                .map_err(|_| bad(lineno, format!("bad frequency {freq:?}")))?;
            match i {
                0 if tok != PAD_TOKEN => return Err(bad(lineno, format!("expected {PAD_TOKEN}"))),
                1 if tok != UNK_TOKEN => return Err(bad(lineno, format!("expected {UNK_TOKEN}"))),
                0 | 1 => {}
                _ => {
                    if tok.is_empty() || seen.insert(tok.to_string(), lineno).is_some() {
                        return Err(bad(lineno, format!("empty or duplicate token {tok:?}")));
                    }
                    entries.push((tok.to_string(), freq));
                }
            }
            count += 1;
        }
        if count < 2 {
            return Err(bad(count + 1, "missing reserved entries".into()));
        }
        let min_frequency = entries.iter().map(|e| e.1).min().unwrap_or(0);
        let max_size = entries.len() + 2;
        Ok(Self::from_entries(entries, min_frequency, max_size))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_file_string().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Fraction of the split's tokens that map to a non-UNK id.
    pub fn coverage(&self, split: &DatasetSplit) -> f64 {
        let (mut known, mut total) = (0usize, 0usize);
        for ex in &split.examples {
            for tok in tokenize(&ex.text) {
                total += 1;
                if self.contains(&tok) {
                    known += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            known as f64 / total as f64
        }
    }
}
