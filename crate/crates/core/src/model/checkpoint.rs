//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   b"SCHNETCK"
//! version    u32       currently 1
//! header_len u64       byte length of the JSON header
//! header     JSON      kind, model config, normalizer, run config text,
//!                      free-form `extra`, and the name/shape of every array
//! arrays     f64 LE    array payloads in header order, no padding
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a save/load round trip is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{layout, ParamStore};
use super::schnet::SchNet;
use crate::autodiff::Tensor;
use crate::data::Normalizer;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SCHNETCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArrayInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    config: ModelConfig,
    normalizer: Normalizer,
    run_config: String,
    #[serde(default)]
    extra: serde_json::Value,
    arrays: Vec<ArrayInfo>,
}

/// Everything a checkpoint file holds.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    /// `"model"` for inference checkpoints, `"train_state"` for resumable training state.
    pub kind: String,
    pub config: ModelConfig,
    pub normalizer: Normalizer,
    /// Flat `key=value` run configuration the model was trained with.
    pub run_config: String,
    pub extra: serde_json::Value,
    pub arrays: Vec<(String, Tensor)>,
}

impl Container {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            normalizer: self.normalizer,
            run_config: self.run_config.clone(),
            extra: self.extra.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, t)| ArrayInfo {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, t) in &self.arrays {
            for x in t.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut b4 = [0u8; 4];
        read_exact(&mut r, &mut b4, "version")?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let mut b8 = [0u8; 8];
        read_exact(&mut r, &mut b8, "header length")?;
        let header_len = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; header_len];
        read_exact(&mut r, &mut json, "header")?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;

        let mut arrays = Vec::with_capacity(header.arrays.len());
        for info in header.arrays {
            let n: usize = info.shape.iter().product();
            let mut bytes = vec![0u8; n * 8];
            read_exact(&mut r, &mut bytes, &info.name)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let t = Tensor::new(info.shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?;
            arrays.push((info.name, t));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after last array".into()));
        }
        Ok(Container {
            kind: header.kind,
            config: header.config,
            normalizer: header.normalizer,
            run_config: header.run_config,
            extra: header.extra,
            arrays,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Container::read_from(BufReader::new(File::open(path)?))
    }

    /// Inference checkpoint for `model`.
    pub fn from_model(model: &SchNet, run_config: &str) -> Self {
        Container {
            kind: "model".into(),
            config: model.config().clone(),
            normalizer: model.normalizer(),
            run_config: run_config.to_string(),
            extra: serde_json::Value::Null,
            arrays: model.params().entries().to_vec(),
        }
    }

    /// Rebuilds the model from the parameter arrays. Train-state containers
    /// store parameters under a `params/` prefix, which is accepted as well.
    pub fn to_model(&self) -> Result<SchNet> {
        let names = layout(&self.config);
        let lookup = |name: &str| {
            self.arrays
                .iter()
                .find(|(n, _)| n == name)
                .or_else(|| {
                    self.arrays
                        .iter()
                        .find(|(n, _)| n.strip_prefix("params/") == Some(name))
                })
                .map(|(_, t)| t.clone())
        };
        let entries = names
            .iter()
            .map(|(name, _)| {
                lookup(name)
                    .map(|t| (name.clone(), t))
                    .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ParamStore::from_entries(&self.config, entries)?;
        SchNet::from_parts(self.config.clone(), params, self.normalizer)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint(format!("truncated checkpoint while reading {what}")),
        _ => Error::Io(e),
    })
}

pub fn save_model(path: impl AsRef<Path>, model: &SchNet, run_config: &str) -> Result<()> {
    Container::from_model(model, run_config).save(path)
}

/// Loads a model checkpoint and returns it with its persisted run configuration.
pub fn load_model(path: impl AsRef<Path>) -> Result<(SchNet, String)> {
    let c = Container::load(path)?;
    Ok((c.to_model()?, c.run_config))
}
