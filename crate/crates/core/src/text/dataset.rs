use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Largest tolerated fraction of malformed lines in a dataset file.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub examples: Vec<Example>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Seeded split of `self` into `(rest, held_out)` where `held_out`
    /// takes `fraction` of the examples (at least one when `self` has two
    /// or more).
    pub fn split_off_dev(&self, fraction: f64, seed: u64) -> (DatasetSplit, DatasetSplit) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut held = ((self.len() as f64) * fraction).round() as usize;
        if self.len() >= 2 {
            held = held.clamp(1, self.len() - 1);
        } else {
            held = 0;
        }
        let mut dev_idx = order[..held].to_vec();
        let mut train_idx = order[held..].to_vec();
        dev_idx.sort_unstable();
        train_idx.sort_unstable();
        let pick = |idx: &[usize], name| DatasetSplit {
            name,
            examples: idx.iter().map(|&i| self.examples[i].clone()).collect(),
        };
        (
            pick(&train_idx, SplitName::Train),
            pick(&dev_idx, SplitName::Dev),
        )
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            let line = serde_json::to_string(ex).expect("example serializes");
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Jsonl,
    Tsv,
}

impl DataFormat {
    /// `.tsv`/`.txt` are TSV; everything else is treated as JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => DataFormat::Tsv,
            _ => DataFormat::Jsonl,
        }
    }
}

/// Line numbers (1-based) and reasons for every rejected line.
#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub malformed: Vec<(usize, String)>,
    pub accepted: usize,
}

fn parse_label(raw: &serde_json::Value) -> std::result::Result<u8, String> {
    match raw.as_u64() {
        Some(l @ (0 | 1)) => Ok(l as u8),
        _ => Err(format!("label must be 0 or 1, got {raw}")),
    }
}

fn parse_line(line: &str, format: DataFormat) -> std::result::Result<Example, String> {
    let (text, label) = match format {
        DataFormat::Jsonl => {
            let v: serde_json::Value =
                serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
            let text = v
                .get("text")
                .and_then(|t| t.as_str())
                .ok_or("missing string field \"text\"")?;
            let label = parse_label(v.get("label").ok_or("missing field \"label\"")?)?;
            (text.to_string(), label)
        }
        DataFormat::Tsv => {
            let (label, text) = line.split_once('\t').ok_or("expected label<TAB>text")?;
            let label = match label.trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(format!("label must be 0 or 1, got {other:?}")),
            };
            (text.to_string(), label)
        }
    };
    if tokenize(&text).is_empty() {
        return Err("empty text".into());
    }
    Ok(Example { text, label })
}

/// Parses dataset text, skipping malformed lines with a warning. Blank
/// lines are ignored and not counted.
pub fn parse_dataset(
    content: &str,
    format: DataFormat,
    name: SplitName,
    path: &Path,
) -> Result<(DatasetSplit, LoadReport)> {
    let mut examples = Vec::new();
    let mut report = LoadReport::default();
    let mut lines = 0usize;
    for (i, line) in content.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        lines += 1;
        match parse_line(line, format) {
            Ok(ex) => examples.push(ex),
            Err(reason) => {
                warn!(
                    "{}:{}: skipping malformed line: {reason}",
                    path.display(),
                    i + 1
                );
                report.malformed.push((i + 1, reason));
            }
        }
    }
    report.accepted = examples.len();
    if lines > 0 && report.malformed.len() as f64 > MAX_MALFORMED_FRACTION * lines as f64 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "{} of {lines} lines are malformed (first at line {})",
                report.malformed.len(),
                report.malformed[0].0
            ),
        });
    }
    info!(
        "{}: loaded {} examples ({} malformed lines skipped)",
        path.display(),
        report.accepted,
        report.malformed.len()
    );
    Ok((DatasetSplit { name, examples }, report))
}

pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    name: SplitName,
) -> Result<(DatasetSplit, LoadReport)> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&content, format, name, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(content: &str, format: DataFormat) -> Result<(DatasetSplit, LoadReport)> {
        parse_dataset(content, format, SplitName::Train, Path::new("mem"))
    }

    #[test]
    fn jsonl_and_tsv() {
        let (s, _) = parse("{\"text\":\"x\",\"label\":1}\n", DataFormat::Jsonl).unwrap();
        assert_eq!(
            s.examples,
            [Example {
                text: "x".into(),
                label: 1
            }]
        );
        let (s, _) = parse("0\thello world\n", DataFormat::Tsv).unwrap();
        assert_eq!(
            s.examples,
            [Example {
                text: "hello world".into(),
                label: 0
            }]
        );
    }

    #[test]
    fn bad_label_is_reported_with_line_number() {
        let mut content = String::new();
        for _ in 0..10 {
            content.push_str("{\"text\":\"ok\",\"label\":0}\n");
        }
        content.push_str("{\"text\":\"x\",\"label\":2}\n");
        let (s, report) = parse(&content, DataFormat::Jsonl).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(report.malformed.len(), 1);
        assert_eq!(report.malformed[0].0, 11);
    }

    #[test]
    fn too_many_malformed_lines() {
        let content = "1\tgood\nnot a tsv line\n";
        assert!(matches!(
            parse(content, DataFormat::Tsv),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn empty_text_rejected_and_blank_lines_ignored() {
        let content = "\n1\tfine\n\n".to_string() + &"0\tok\n".repeat(10) + "0\t   \n";
        let (s, report) = parse(&content, DataFormat::Tsv).unwrap();
        assert_eq!(s.len(), 11);
        assert_eq!(report.malformed[0].0, 14);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_dataset(
            Path::new("/nonexistent/x.jsonl"),
            DataFormat::Jsonl,
            SplitName::Train,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn dev_split_is_seeded_and_disjoint() {
        let split = DatasetSplit {
            name: SplitName::Train,
            examples: (0..20)
                .map(|i| Example {
                    text: format!("t{i}"),
                    label: (i % 2) as u8,
                })
                .collect(),
        };
        let (a, b) = split.split_off_dev(0.1, 7);
        let (a2, b2) = split.split_off_dev(0.1, 7);
        assert_eq!((a.len(), b.len()), (18, 2));
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        assert!(b.examples.iter().all(|e| !a.examples.contains(e)));
    }
}
