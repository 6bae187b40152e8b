use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{AdaptorNet, HeadKind, PARAM_NAMES};
use crate::numerics::{Linear, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DSQC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageTag {
    Stage1,
    Stage2,
    Stage3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    stage: StageTag,
    head: HeadKind,
    config: RunConfig,
    metrics: BTreeMap<String, f64>,
}

/// Serialised model weights plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: StageTag,
    pub head: HeadKind,
    pub config: RunConfig,
    pub metrics: BTreeMap<String, f64>,
    pub tensors: Vec<NamedTensor>,
}

fn linear_tensors(prefix: &str, l: &Linear) -> [NamedTensor; 2] {
    [
        NamedTensor {
            name: format!("{prefix}.weight"),
            value: l.weight.clone(),
        },
        NamedTensor {
            name: format!("{prefix}.bias"),
            value: Matrix::from_vec(1, l.bias.len(), l.bias.clone()).expect("bias row"),
        },
    ]
}

impl Checkpoint {
    pub fn from_model(model: &AdaptorNet, stage: StageTag, config: &RunConfig, metrics: BTreeMap<String, f64>) -> Self {
        let mut tensors = Vec::with_capacity(6);
        tensors.extend(linear_tensors("layer1", &model.layer1));
        tensors.extend(linear_tensors("layer2", &model.layer2));
        tensors.extend(linear_tensors("head", &model.head));
        Self {
            stage,
            head: model.head_kind,
            config: config.clone(),
            metrics,
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.value)
    }

    fn linear(&self, prefix: &str) -> Result<Linear> {
        let w = self
            .tensor(&format!("{prefix}.weight"))
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {prefix}.weight")))?;
        let b = self
            .tensor(&format!("{prefix}.bias"))
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {prefix}.bias")))?;
        if b.rows() != 1 {
            return Err(Error::Checkpoint(format!("{prefix}.bias must be a row vector")));
        }
        Linear::new(w.clone(), b.data().to_vec())
    }

    /// Rebuilds the network, checking the recorded shapes against each other.
    pub fn to_model(&self) -> Result<AdaptorNet> {
        let layer1 = self.linear("layer1")?;
        let layer2 = self.linear("layer2")?;
        let head = self.linear("head")?;
        let m = &self.config.model;
        if layer2.in_dim() != layer1.out_dim() || head.in_dim() != m.pooling.output_dim(layer2.out_dim()) {
            return Err(Error::Checkpoint("inconsistent layer shapes".into()));
        }
        Ok(AdaptorNet {
            layer1,
            layer2,
            head,
            head_kind: self.head,
            pooling: m.pooling,
            dropout: m.dropout,
            normalize: m.normalize,
            normalize_embeddings: m.normalize_embeddings,
        })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            stage: self.stage,
            head: self.head,
            config: self.config.clone(),
            metrics: self.metrics.clone(),
        })?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&u32_len(header.len())?.to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&u32_len(self.tensors.len())?.to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&u32_len(t.name.len())?.to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&u32_len(t.value.rows())?.to_le_bytes());
            out.extend_from_slice(&u32_len(t.value.cols())?.to_le_bytes());
            for v in t.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format(0, "bad checkpoint magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
        }
        let hlen = r.u32()? as usize;
        let at = r.pos as u64;
        let header: Header =
            serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::format(at, format!("config blob: {e}")))?;
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let len = r.u32()? as usize;
            let at = r.pos as u64;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::format(at, "tensor name is not UTF-8"))?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let count = rows
                .checked_mul(cols)
                .filter(|c| c.checked_mul(8).is_some())
                .ok_or_else(|| Error::format(r.pos as u64, "tensor size overflows"))?;
            let raw = r.take(count * 8)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(NamedTensor {
                name,
                value: Matrix::from_vec(rows, cols, data)?,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos as u64, "trailing bytes after checkpoint"));
        }
        for name in PARAM_NAMES {
            if !tensors.iter().any(|t| t.name == name) {
                return Err(Error::Checkpoint(format!("missing tensor {name}")));
            }
        }
        Ok(Self {
            stage: header.stage,
            head: header.head,
            config: header.config,
            metrics: header.metrics,
            tensors,
        })
    }
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Checkpoint(format!("length {n} exceeds u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.bytes.len() as u64, "truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    crate::evaluation::write_atomic(path.as_ref(), &ckpt.encode()?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::decode(&fs::read(path)?)
}
