//! Binary checkpoint format.
//!
//! Little-endian layout: magic `LGCN`, `u32` version, `u32`-length-prefixed
//! JSON model config, then one record per array until end of file:
//! `u32` path length, UTF-8 path, `u8` dtype tag, `u32` rank, `u64` dims,
//! row-major payload.

use std::collections::BTreeMap;
use std::path::Path;

use super::layers::Visit;
use super::{Model, ModelConfig, Parameters};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LGCN";
pub const VERSION: u32 = 1;
pub const DTYPE_F64: u8 = 1;

pub fn to_bytes(config: &ModelConfig, params: &Parameters) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let doc = serde_json::to_vec(config).expect("config serializes");
    out.extend_from_slice(&(doc.len() as u32).to_le_bytes());
    out.extend_from_slice(&doc);
    params.visit("", &mut |path, shape, data, _| {
        out.extend_from_slice(&(path.len() as u32).to_le_bytes());
        out.extend_from_slice(path.as_bytes());
        out.push(DTYPE_F64);
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    });
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptCheckpoint(format!(
                "truncated while reading {what}"
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(ModelConfig, Parameters)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::CorruptCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let len = r.u32("config length")? as usize;
    let doc = r.take(len, "config")?;
    let config: ModelConfig = serde_json::from_slice(doc)
        .map_err(|e| Error::CorruptCheckpoint(format!("config: {e}")))?;
    config
        .validate()
        .map_err(|e| Error::CorruptCheckpoint(format!("config: {e}")))?;

    let mut records: BTreeMap<String, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
    while !r.done() {
        let plen = r.u32("path length")? as usize;
        let path = std::str::from_utf8(r.take(plen, "path")?)
            .map_err(|_| Error::CorruptCheckpoint("path is not UTF-8".into()))?
            .to_string();
        let dtype = r.take(1, "dtype")?[0];
        if dtype != DTYPE_F64 {
            return Err(Error::CorruptCheckpoint(format!(
                "{path}: unknown dtype tag {dtype}"
            )));
        }
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u64("dims")? as usize);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::CorruptCheckpoint(format!("{path}: dims overflow")))?;
        let payload = r.take(count, &path)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if records.insert(path.clone(), (dims, data)).is_some() {
            return Err(Error::CorruptCheckpoint(format!("duplicate record {path}")));
        }
    }

    let mut params = Parameters::zeros(&config);
    let mut problem: Option<String> = None;
    params.visit_mut("", &mut |path, shape, data, _| {
        if problem.is_some() {
            return;
        }
        match records.remove(path) {
            None => problem = Some(format!("missing record {path}")),
            Some((dims, _)) if dims != shape => {
                problem = Some(format!("{path}: shape {dims:?}, expected {shape:?}"))
            }
            Some((_, values)) => data.copy_from_slice(&values),
        }
    });
    if let Some(p) = problem {
        return Err(Error::CorruptCheckpoint(p));
    }
    if let Some(extra) = records.keys().next() {
        return Err(Error::CorruptCheckpoint(format!(
            "unexpected record {extra}"
        )));
    }
    if !params.is_finite() {
        return Err(Error::CorruptCheckpoint(
            "non-finite parameter values".into(),
        ));
    }
    Ok((config, params))
}

pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &Parameters) -> Result<()> {
    std::fs::write(path, to_bytes(config, params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, Parameters)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Loads parameters into an existing model whose config must match.
pub fn load_into(model: &mut Model, path: &Path) -> Result<()> {
    let (config, params) = load_checkpoint(path)?;
    if config != model.config {
        let detail = if config.modules() != model.config.modules() {
            format!(
                "checkpoint has {} modules, model has {}",
                config.modules(),
                model.config.modules()
            )
        } else {
            "architecture fields differ".to_string()
        };
        return Err(Error::ConfigMismatch(detail));
    }
    model.params = params;
    Ok(())
}
