//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "SPTCKPT\0"
//! version      u32
//! count        u32
//! header       count x { name_len u16, name utf8, ndim u8, dims u32*ndim, width u8 }
//! data         parameter values in header order, `width` bytes each
//! config_len   u32
//! config       JSON-encoded ModelConfig
//! checksum     u32, CRC-32 of the data section
//! ```
//!
//! Loading at a narrower width rounds each value to nearest (f64 -> f32);
//! widening is exact.

use std::fs;
use std::path::Path;

use super::{ModelConfig, SptModel};
use crate::numcore::{Array, Scalar};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPTCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_checkpoint<T: Scalar>(model: &SptModel<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.specs().len() as u32).to_le_bytes());
    for (s, p) in model.specs().iter().zip(model.params()) {
        let name = s.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(2);
        for dim in p.shape() {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        out.push(T::BYTES as u8);
    }
    let data_start = out.len();
    for p in model.params() {
        for &x in p.data() {
            x.write_le(&mut out);
        }
    }
    let checksum = crc32fast::hash(&out[data_start..]);
    let config = serde_json::to_vec(model.config())?;
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&checksum.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

struct Entry {
    name: String,
    rows: usize,
    cols: usize,
    width: usize,
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<SptModel<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.u16()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let ndim = r.u8()?;
        if ndim != 2 {
            return Err(Error::Checkpoint(format!("{name}: rank {ndim} not supported")));
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let width = r.u8()? as usize;
        if width != 4 && width != 8 {
            return Err(Error::Checkpoint(format!("{name}: element width {width}")));
        }
        entries.push(Entry { name, rows, cols, width });
    }
    let data_start = r.pos;
    let mut params = Vec::with_capacity(count);
    for e in &entries {
        let raw = r.take(e.rows * e.cols * e.width)?;
        let values: Vec<T> = raw
            .chunks_exact(e.width)
            .map(|c| match e.width {
                8 => T::of(f64::read_le(c)),
                _ => T::of(f32::read_le(c) as f64),
            })
            .collect();
        params.push(Array::from_vec(e.rows, e.cols, values)?);
    }
    let data_end = r.pos;
    let config_len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len)?)?;
    let stored = r.u32()?;
    let actual = crc32fast::hash(&bytes[data_start..data_end]);
    if stored != actual {
        return Err(Error::Checkpoint(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let model = SptModel::from_params(config, params)?;
    for (s, e) in model.specs().iter().zip(&entries) {
        if s.name != e.name {
            return Err(Error::Checkpoint(format!(
                "parameter order mismatch: expected {}, found {}",
                s.name, e.name
            )));
        }
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &SptModel<T>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<SptModel<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads and checks that the stored architecture equals `expected`.
pub fn load_checkpoint_as<T: Scalar>(path: &Path, expected: &ModelConfig) -> Result<SptModel<T>> {
    let model = load_checkpoint(path)?;
    let stored = model.config();
    let same = stored.layers == expected.layers
        && stored.hidden == expected.hidden
        && stored.heads == expected.heads
        && stored.mlp_size == expected.mlp_size
        && stored.num_classes == expected.num_classes
        && stored.max_len == expected.max_len
        && stored.use_positional == expected.use_positional;
    if !same {
        return Err(Error::Checkpoint(format!(
            "checkpoint architecture {stored:?} does not match {expected:?}"
        )));
    }
    Ok(model)
}
