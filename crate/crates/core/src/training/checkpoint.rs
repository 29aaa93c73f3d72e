//! Self-describing binary checkpoint.
//!
//! ```text
//! magic     8 bytes  "MEMPLAY\0"
//! version   u32 LE
//! count     u32 LE   number of blocks
//! block*    name_len u16 LE | name (utf-8) | tag u8 | len u64 LE | payload
//! ```
//! Tags: `0` = `len` little-endian f64, `1` = `len` little-endian u64, `2` = `len` utf-8 bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MEMPLAY\0";
pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "ckpt";

#[derive(Clone, Debug, PartialEq)]
pub enum BlockData {
    F64(Vec<f64>),
    U64(Vec<u64>),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub blocks: Vec<(String, BlockData)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_f64(&mut self, name: impl Into<String>, data: Vec<f64>) {
        self.blocks.push((name.into(), BlockData::F64(data)));
    }

    pub fn push_u64(&mut self, name: impl Into<String>, data: Vec<u64>) {
        self.blocks.push((name.into(), BlockData::U64(data)));
    }

    pub fn push_text(&mut self, name: impl Into<String>, text: impl Into<String>) {
        self.blocks.push((name.into(), BlockData::Text(text.into())));
    }

    fn find(&self, name: &str) -> Result<&BlockData> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d)
            .ok_or_else(|| Error::Checkpoint {
                offset: 0,
                message: format!("missing block `{name}`"),
            })
    }

    pub fn has(&self, name: &str) -> bool {
        self.blocks.iter().any(|(n, _)| n == name)
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64]> {
        match self.find(name)? {
            BlockData::F64(v) => Ok(v),
            _ => Err(wrong_type(name)),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64]> {
        match self.find(name)? {
            BlockData::U64(v) => Ok(v),
            _ => Err(wrong_type(name)),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.find(name)? {
            BlockData::Text(s) => Ok(s),
            _ => Err(wrong_type(name)),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for (name, data) in &self.blocks {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match data {
                BlockData::F64(v) => {
                    out.push(0);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
                BlockData::U64(v) => {
                    out.push(1);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
                BlockData::Text(s) => {
                    out.push(2);
                    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
                    out.extend_from_slice(s.as_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(r.error_at(0, "not a checkpoint file (bad magic)"));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(r.error_at(
                8,
                &format!("unsupported checkpoint version {version} (expected {FORMAT_VERSION})"),
            ));
        }
        let count = r.u32("block count")?;
        let mut blocks = Vec::with_capacity(count.min(1024) as usize);
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2, "block name length")?.try_into().unwrap()) as usize;
            let name_at = r.pos;
            let name = std::str::from_utf8(r.take(name_len, "block name")?)
                .map_err(|_| r.error_at(name_at, "block name is not utf-8"))?
                .to_string();
            let tag_at = r.pos;
            let tag = r.take(1, "block tag")?[0];
            let len = r.u64("block length")? as usize;
            let data = match tag {
                0 => BlockData::F64(
                    r.take(len.checked_mul(8).ok_or_else(|| r.error_at(tag_at, "block too large"))?, "f64 payload")?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                1 => BlockData::U64(
                    r.take(len.checked_mul(8).ok_or_else(|| r.error_at(tag_at, "block too large"))?, "u64 payload")?
                        .chunks_exact(8)
                        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                2 => {
                    let at = r.pos;
                    BlockData::Text(
                        std::str::from_utf8(r.take(len, "text payload")?)
                            .map_err(|_| r.error_at(at, "text block is not utf-8"))?
                            .to_string(),
                    )
                }
                other => return Err(r.error_at(tag_at, &format!("unknown block tag {other}"))),
            };
            blocks.push((name, data));
        }
        if r.pos != bytes.len() {
            return Err(r.error_at(r.pos, "trailing bytes after last block"));
        }
        Ok(Checkpoint { blocks })
    }

    /// Writes atomically (temporary file, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn wrong_type(name: &str) -> Error {
    Error::Checkpoint {
        offset: 0,
        message: format!("block `{name}` has the wrong type"),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error_at(&self, offset: usize, message: &str) -> Error {
        Error::Checkpoint {
            offset,
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.error_at(
                self.pos,
                &format!("truncated while reading {what} ({n} bytes wanted, {} left)", self.bytes.len() - self.pos),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}
