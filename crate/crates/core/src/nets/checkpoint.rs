//! Binary checkpoints: magic, format version, JSON header, raw f64 blocks.
//!
//! Layout: 8-byte magic, u32 LE version, u64 LE header length, UTF-8 JSON
//! header, then every parameter block as little-endian f64 in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Embedding, NetSpec, Sequential};
use crate::error::{Error, Result};
use crate::persist::write_atomic;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LFGCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Module {
    Net(Sequential),
    Embedding(Embedding),
}

impl Module {
    fn blocks(&self) -> Vec<&[f64]> {
        match self {
            Module::Net(n) => n.params(),
            Module::Embedding(e) => vec![e.table()],
        }
    }
}

/// Named parameter-bearing modules plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub modules: Vec<(String, Module)>,
}

impl Checkpoint {
    pub fn net(&self, name: &str) -> Option<&Sequential> {
        self.modules.iter().find_map(|(n, m)| match m {
            Module::Net(s) if n == name => Some(s),
            _ => None,
        })
    }

    pub fn embedding(&self, name: &str) -> Option<&Embedding> {
        self.modules.iter().find_map(|(n, m)| match m {
            Module::Embedding(e) if n == name => Some(e),
            _ => None,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModuleHeader {
    Sequential { name: String, spec: NetSpec, shapes: Vec<Vec<usize>> },
    Embedding { name: String, rows: usize, dim: usize },
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    modules: Vec<ModuleHeader>,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let modules = ckpt
        .modules
        .iter()
        .map(|(name, m)| match m {
            Module::Net(n) => {
                ModuleHeader::Sequential { name: name.clone(), spec: n.spec().clone(), shapes: n.param_shapes() }
            }
            Module::Embedding(e) => ModuleHeader::Embedding { name: name.clone(), rows: e.rows(), dim: e.dim() },
        })
        .collect();
    let header = serde_json::to_vec(&Header { meta: ckpt.meta.clone(), modules })?;
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    for (_, m) in &ckpt.modules {
        for block in m.blocks() {
            for v in block {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    write_atomic(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let fail = |reason: String| Error::Checkpoint { path: path.display().to_string(), reason };
    let bytes = std::fs::read(path).map_err(|e| fail(e.to_string()))?;
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fail("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(fail(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..).unwrap_or_default();
    if hlen > body.len() {
        return Err(fail("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| fail(format!("bad header: {e}")))?;
    let mut data = body[hlen..].chunks_exact(8);
    if body[hlen..].len() % 8 != 0 {
        return Err(fail("parameter data is not a whole number of f64 values".into()));
    }
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let c = data.next().ok_or_else(|| fail("truncated parameter data".into()))?;
            out.push(f64::from_le_bytes(c.try_into().expect("8 bytes")));
        }
        Ok(out)
    };
    let mut modules = Vec::new();
    for mh in header.modules {
        match mh {
            ModuleHeader::Sequential { name, spec, shapes } => {
                let mut net = Sequential::zeros(spec).map_err(|e| fail(e.to_string()))?;
                if net.param_shapes() != shapes {
                    return Err(fail(format!("module {name}: parameter shapes disagree with its spec")));
                }
                let blocks = shapes.iter().map(|s| take(s.iter().product())).collect::<Result<Vec<_>>>()?;
                net.set_params(blocks)?;
                modules.push((name, Module::Net(net)));
            }
            ModuleHeader::Embedding { name, rows, dim } => {
                let mut e = Embedding::zeros(rows, dim);
                let t = take(rows * dim)?;
                e.table_mut().copy_from_slice(&t);
                modules.push((name, Module::Embedding(e)));
            }
        }
    }
    if data.next().is_some() {
        return Err(fail("trailing bytes after parameter data".into()));
    }
    Ok(Checkpoint { meta: header.meta, modules })
}
