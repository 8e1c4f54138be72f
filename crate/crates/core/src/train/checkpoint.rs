//! Binary checkpoints.
//!
//! Layout, little-endian: magic `SIRM1`, `u32` length and UTF-8 JSON model
//! config, then one record per tensor: `u32` name length, name, `u32` rank,
//! `u32` dims, `f32` data.

use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::NbowModel;
use crate::io::write_atomic;
use crate::model::{Classifier, ModelConfig, SirmModel};
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 5] = b"SIRM1";

/// A model restored from disk.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum LoadedModel {
    Sirm(SirmModel<f32>),
    Nbow(NbowModel<f32>),
}

impl LoadedModel {
    pub fn config(&self) -> ModelConfig {
        match self {
            LoadedModel::Sirm(m) => m.config(),
            LoadedModel::Nbow(m) => m.config(),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, x: usize) -> Result<()> {
    let x = u32::try_from(x).map_err(|_| Error::Checkpoint(format!("{x} exceeds u32")))?;
    out.extend_from_slice(&x.to_le_bytes());
    Ok(())
}

/// Serializes a model, storing every value as `f32`.
pub fn encode_checkpoint<T: Real, M: Classifier<T>>(model: &M) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    let config = serde_json::to_vec(&model.config())
        .map_err(|e| Error::Checkpoint(format!("config does not serialize: {e}")))?;
    put_u32(&mut out, config.len())?;
    out.extend_from_slice(&config);
    for (name, t) in model.tensors() {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        for &x in t.data() {
            out.extend_from_slice(&(x.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!(
                "corrupt checkpoint: truncated while reading {what} at byte {}",
                self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Named `f32` tensors in file order.
pub type NamedTensors = Vec<(String, Tensor<f32>)>;

/// Parses a checkpoint into its config and named `f32` tensors without
/// checking them against each other.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelConfig, NamedTensors)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint(
            "corrupt checkpoint: bad magic or version".into(),
        ));
    }
    let len = r.u32("config length")?;
    let config: ModelConfig = serde_json::from_slice(r.take(len, "config")?)
        .map_err(|e| Error::Checkpoint(format!("corrupt checkpoint config: {e}")))?;
    let mut tensors = Vec::new();
    while !r.done() {
        let len = r.u32("tensor name length")?;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| Error::Checkpoint("corrupt checkpoint: tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")?;
        if rank > 8 {
            return Err(Error::Checkpoint(format!(
                "corrupt checkpoint: rank {rank} for {name}"
            )));
        }
        let shape = (0..rank)
            .map(|_| r.u32("dims"))
            .collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Checkpoint(format!("corrupt checkpoint: shape {shape:?}")))?;
        let data = r
            .take(numel, "tensor data")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    Ok((config, tensors))
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<LoadedModel> {
    let (config, tensors) = decode_checkpoint(bytes)?;
    match config {
        ModelConfig::Sirm(c) => {
            c.validate()?;
            Ok(LoadedModel::Sirm(SirmModel::from_named(c, tensors)?))
        }
        ModelConfig::Nbow(c) => Ok(LoadedModel::Nbow(NbowModel::from_named(c, tensors)?)),
    }
}

pub fn save_checkpoint<T: Real, M: Classifier<T>>(model: &M, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model)?)
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check::toy_config;

    #[test]
    fn truncation_is_reported() {
        let model = SirmModel::<f32>::init(toy_config(), 0).unwrap();
        let bytes = encode_checkpoint(&model).unwrap();
        for cut in [0, 3, 7, 40, bytes.len() - 1] {
            let err = checkpoint_from_bytes(&bytes[..cut]).unwrap_err();
            assert!(err.to_string().contains("corrupt"), "{err}");
        }
        assert_eq!(
            checkpoint_from_bytes(&bytes).unwrap(),
            LoadedModel::Sirm(model)
        );
    }
}
