//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "AMI1" | u32 version | { u32 name_len | name | u32 rank | u64 dims[rank] | f64 values[..] }*
//! ```
//!
//! Blocks follow one another until end of file.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::params::ParameterSet;
use crate::error::{AmiError, Result};

pub const MAGIC: &[u8; 4] = b"AMI1";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(params: &ParameterSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + params.numel() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for b in params.blocks() {
        out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
        out.extend_from_slice(b.name.as_bytes());
        out.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
        for d in &b.shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in &b.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(AmiError::Format(format!("truncated checkpoint at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParameterSet> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(AmiError::Format("bad checkpoint magic".into()));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(AmiError::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut params = ParameterSet::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| AmiError::Format("block name is not utf-8".into()))?
            .to_string();
        let rank = cur.u32()? as usize;
        let shape = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let values = (0..numel)
            .map(|_| cur.u64().map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        params.push(name, shape, values)?;
    }
    Ok(params)
}

pub fn save(path: impl AsRef<Path>, params: &ParameterSet) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| AmiError::path(path, e))?;
    f.write_all(&encode(params)).map_err(|e| AmiError::path(path, e))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ParameterSet> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| AmiError::path(path, e))?;
    decode(&buf)
}

/// SHA-256 of the encoded checkpoint, hex.
pub fn content_hash(params: &ParameterSet) -> String {
    hex::encode(Sha256::digest(encode(params)))
}

pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| AmiError::path(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}
