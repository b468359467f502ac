//! Binary checkpoints.
//!
//! Layout: a text manifest followed by a little-endian `f64` payload.
//!
//! ```text
//! pgfn-ckpt v1
//! kind <model kind, e.g. "gmc v1">
//! step <optimizer steps>
//! meta <key>\t<value>            (zero or more)
//! param <name> <rows> <cols> <byte offset>   (one per parameter, store order)
//! payload <byte length>
//! <raw bytes>
//! ```
//!
//! Parameter names and meta keys must not contain whitespace; meta values
//! must not contain newlines.

use std::fs;
use std::path::Path;

use crate::array::Tensor;
use crate::error::{Result, TensorError};
use crate::params::ParamStore;

pub const MAGIC: &str = "pgfn-ckpt v1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub store: ParamStore,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, store: ParamStore) -> Self {
        Checkpoint { kind: kind.into(), meta: Vec::new(), store }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(&self.kind, &self.meta, &self.store)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        decode(bytes)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> std::result::Result<Checkpoint, LoadError> {
        let bytes = fs::read(path)?;
        Ok(Checkpoint::from_bytes(&bytes)?)
    }

    /// Fails unless the checkpoint carries the expected model kind.
    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(TensorError::BadCheckpoint(format!("expected kind `{kind}`, found `{}`", self.kind)))
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] TensorError),
}

fn encode(kind: &str, meta: &[(String, String)], store: &ParamStore) -> Vec<u8> {
    let mut header = format!("{MAGIC}\nkind {kind}\nstep {}\n", store.step());
    for (k, v) in meta {
        header.push_str(&format!("meta {k}\t{v}\n"));
    }
    let mut offset = 0usize;
    for (name, t) in store.iter() {
        header.push_str(&format!("param {name} {} {} {offset}\n", t.rows(), t.cols()));
        offset += t.len() * 8;
    }
    header.push_str(&format!("payload {offset}\n"));
    let mut out = header.into_bytes();
    out.reserve(offset);
    for (_, t) in store.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::BadCheckpoint(msg.into())
}

fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut pos = 0usize;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated manifest"))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| bad("manifest is not UTF-8"))
    };
    if next_line()? != MAGIC {
        return Err(bad("missing `pgfn-ckpt v1` header"));
    }
    let kind = next_line()?.strip_prefix("kind ").ok_or_else(|| bad("missing kind line"))?.to_string();
    let step: u64 = next_line()?
        .strip_prefix("step ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing step line"))?;
    let mut meta = Vec::new();
    let mut params: Vec<(String, usize, usize, usize)> = Vec::new();
    let payload_len = loop {
        let line = next_line()?;
        if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest.split_once('\t').ok_or_else(|| bad("malformed meta line"))?;
            meta.push((k.to_string(), v.to_string()));
        } else if let Some(rest) = line.strip_prefix("param ") {
            let f: Vec<&str> = rest.split(' ').collect();
            if f.len() != 4 {
                return Err(bad(format!("malformed param line `{line}`")));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad number in `{line}`")));
            params.push((f[0].to_string(), num(f[1])?, num(f[2])?, num(f[3])?));
        } else if let Some(rest) = line.strip_prefix("payload ") {
            break rest.parse::<usize>().map_err(|_| bad("bad payload length"))?;
        } else {
            return Err(bad(format!("unexpected manifest line `{line}`")));
        }
    };
    let payload = &bytes[pos..];
    if payload.len() != payload_len {
        return Err(bad(format!("payload is {} bytes, manifest says {payload_len}", payload.len())));
    }
    let mut store = ParamStore::new();
    for (name, rows, cols, off) in params {
        let end = off + rows * cols * 8;
        if end > payload.len() {
            return Err(bad(format!("parameter `{name}` overruns payload")));
        }
        let data = payload[off..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.insert(name, Tensor::from_vec(rows, cols, data))?;
    }
    store.set_step(step);
    Ok(Checkpoint { kind, meta, store })
}
