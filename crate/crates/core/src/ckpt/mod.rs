//! Sparse model-state compression and its bit-exact on-disk format.
//!
//! Each tensor is stored either dense (all-zero tensors keep their original
//! form) or as shape + non-zero bitmask + packed non-zero values. Zeroness is
//! judged on raw f32 bits, so -0.0 and NaN payloads survive round-trips
//! unchanged.
//!
//! File layout (little-endian): magic `SMSC` · version u16 · metadata count
//! u32 · metadata (u16-length-prefixed UTF-8 key/value pairs) · entry count
//! u32 · per entry: name (u16 len + UTF-8) · flag u8 (0 dense, 1 sparse) ·
//! rank u8 · dims u64[] · if sparse: mask byte-length u64 + mask bytes + nnz
//! u64 · values f32[].

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::nn::{ModelState, Tensor};

const MAGIC: [u8; 4] = *b"SMSC";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CkptError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad magic: expected SMSC")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated file ({0})")]
    Truncated(&'static str),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("state mismatch: {0}")]
    StateMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    Dense(Vec<f32>),
    Sparse { mask: Vec<u8>, values: Vec<f32> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub storage: Storage,
}

impl Entry {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }
}

/// On-disk representation of a (possibly sparse) model state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseCheckpoint {
    pub entries: Vec<Entry>,
    pub metadata: BTreeMap<String, String>,
}

/// Bit i of the flattened tensor lives at bit (i % 8) of byte (i / 8).
fn build_mask(data: &[f32]) -> (Vec<u8>, usize) {
    let mut mask = vec![0u8; data.len().div_ceil(8)];
    let mut nnz = 0usize;
    for (i, v) in data.iter().enumerate() {
        if v.to_bits() != 0 {
            mask[i / 8] |= 1 << (i % 8);
            nnz += 1;
        }
    }
    (mask, nnz)
}

fn mask_bit(mask: &[u8], i: usize) -> bool {
    mask.get(i / 8).is_some_and(|b| b & (1 << (i % 8)) != 0)
}

/// Per-tensor compression: keep all-zero tensors dense, otherwise store the
/// non-zero bitmask plus packed values. Metadata is copied verbatim.
pub fn compress_state(state: &ModelState) -> SparseCheckpoint {
    let entries = state
        .iter()
        .map(|(name, tensor)| {
            let (mask, nnz) = build_mask(tensor.data());
            let storage = if nnz == 0 {
                Storage::Dense(tensor.data().to_vec())
            } else {
                let values = tensor
                    .data()
                    .iter()
                    .copied()
                    .filter(|v| v.to_bits() != 0)
                    .collect();
                Storage::Sparse { mask, values }
            };
            Entry {
                name: name.to_string(),
                shape: tensor.shape().to_vec(),
                storage,
            }
        })
        .collect();
    SparseCheckpoint {
        entries,
        metadata: state.metadata.clone(),
    }
}

/// All-dense encoding of a state (what a naive save would write).
pub fn dense_checkpoint(state: &ModelState) -> SparseCheckpoint {
    SparseCheckpoint {
        entries: state
            .iter()
            .map(|(name, tensor)| Entry {
                name: name.to_string(),
                shape: tensor.shape().to_vec(),
                storage: Storage::Dense(tensor.data().to_vec()),
            })
            .collect(),
        metadata: state.metadata.clone(),
    }
}

/// Exact reconstruction: zeros where the mask bit is 0, stored values in
/// mask order elsewhere.
pub fn decompress_state(ckpt: &SparseCheckpoint) -> Result<ModelState, CkptError> {
    let mut state = ModelState::new();
    state.metadata = ckpt.metadata.clone();
    for entry in &ckpt.entries {
        let n = entry.element_count();
        let data = match &entry.storage {
            Storage::Dense(values) => {
                if values.len() != n {
                    return Err(CkptError::Corrupt(format!(
                        "dense entry `{}` holds {} values for shape {:?}",
                        entry.name,
                        values.len(),
                        entry.shape
                    )));
                }
                values.clone()
            }
            Storage::Sparse { mask, values } => {
                let popcount: usize = (0..n).filter(|&i| mask_bit(mask, i)).count();
                if popcount != values.len() {
                    return Err(CkptError::Corrupt(format!(
                        "entry `{}`: mask popcount {} != {} stored values",
                        entry.name,
                        popcount,
                        values.len()
                    )));
                }
                let mut data = vec![0.0f32; n];
                let mut k = 0usize;
                for (i, d) in data.iter_mut().enumerate() {
                    if mask_bit(mask, i) {
                        *d = values[k];
                        k += 1;
                    }
                }
                data
            }
        };
        let tensor = Tensor::new(entry.shape.clone(), data)
            .map_err(|e| CkptError::Corrupt(e.to_string()))?;
        state
            .insert(entry.name.clone(), tensor)
            .map_err(|e| CkptError::Corrupt(e.to_string()))?;
    }
    Ok(state)
}

// ---- binary encoding -----------------------------------------------------------

fn put_str16(out: &mut Vec<u8>, s: &str) {
    let bytes = s.as_bytes();
    debug_assert!(bytes.len() <= u16::MAX as usize);
    out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(bytes);
}

pub fn to_bytes(ckpt: &SparseCheckpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ckpt.metadata.len() as u32).to_le_bytes());
    for (k, v) in &ckpt.metadata {
        put_str16(&mut out, k);
        put_str16(&mut out, v);
    }
    out.extend_from_slice(&(ckpt.entries.len() as u32).to_le_bytes());
    for e in &ckpt.entries {
        put_str16(&mut out, &e.name);
        match &e.storage {
            Storage::Dense(values) => {
                out.push(0);
                out.push(e.shape.len() as u8);
                for &d in &e.shape {
                    out.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Storage::Sparse { mask, values } => {
                out.push(1);
                out.push(e.shape.len() as u8);
                for &d in &e.shape {
                    out.extend_from_slice(&(d as u64).to_le_bytes());
                }
                out.extend_from_slice(&(mask.len() as u64).to_le_bytes());
                out.extend_from_slice(mask);
                out.extend_from_slice(&(values.len() as u64).to_le_bytes());
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CkptError> {
        if self.pos + n > self.buf.len() {
            return Err(CkptError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &'static str) -> Result<u8, CkptError> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &'static str) -> Result<u16, CkptError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &'static str) -> Result<u32, CkptError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &'static str) -> Result<u64, CkptError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn str16(&mut self, what: &'static str) -> Result<String, CkptError> {
        let len = self.u16(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| CkptError::Corrupt(format!("{what}: invalid UTF-8")))
    }
    fn f32s(&mut self, count: usize, what: &'static str) -> Result<Vec<f32>, CkptError> {
        let raw = self.take(count * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<SparseCheckpoint, CkptError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(CkptError::BadMagic);
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(CkptError::UnsupportedVersion(version));
    }
    let meta_count = r.u32("metadata count")?;
    let mut metadata = BTreeMap::new();
    for _ in 0..meta_count {
        let k = r.str16("metadata key")?;
        let v = r.str16("metadata value")?;
        metadata.insert(k, v);
    }
    let entry_count = r.u32("entry count")?;
    let mut entries = Vec::with_capacity(entry_count as usize);
    for _ in 0..entry_count {
        let name = r.str16("entry name")?;
        let flag = r.u8("flag")?;
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        let storage = match flag {
            0 => Storage::Dense(r.f32s(n, "dense values")?),
            1 => {
                let mask_len = r.u64("mask length")? as usize;
                let mask = r.take(mask_len, "mask bytes")?.to_vec();
                let nnz = r.u64("nnz")? as usize;
                let values = r.f32s(nnz, "sparse values")?;
                Storage::Sparse { mask, values }
            }
            other => return Err(CkptError::Corrupt(format!("unknown storage flag {other}"))),
        };
        entries.push(Entry {
            name,
            shape,
            storage,
        });
    }
    Ok(SparseCheckpoint { entries, metadata })
}

pub fn write_file(ckpt: &SparseCheckpoint, path: &Path) -> Result<(), CkptError> {
    let bytes = to_bytes(ckpt);
    let mut f = fs::File::create(path).map_err(|source| CkptError::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(&bytes).map_err(|source| CkptError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<SparseCheckpoint, CkptError> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| CkptError::Io {
            path: path.display().to_string(),
            source,
        })?;
    from_bytes(&buf)
}

/// Size accounting for a pruned state against its dense baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeRatioReport {
    /// bytes of all parameters at f32 density
    pub dense_bytes: u64,
    /// bytes of non-zero values only (no masks or headers)
    pub payload_bytes: u64,
    /// full sparse-file bytes
    pub total_bytes: u64,
    /// dense / payload — the values-only compression factor
    pub payload_ratio: f64,
    /// dense / total — the on-disk compression factor
    pub total_ratio: f64,
}

/// Compares a pruned state to its dense baseline. Both must have identical
/// parameter names and shapes.
pub fn size_ratio(base: &ModelState, pruned: &ModelState) -> Result<SizeRatioReport, CkptError> {
    if base.len() != pruned.len() {
        return Err(CkptError::StateMismatch(format!(
            "{} vs {} entries",
            base.len(),
            pruned.len()
        )));
    }
    for ((bn, bt), (pn, pt)) in base.iter().zip(pruned.iter()) {
        if bn != pn {
            return Err(CkptError::StateMismatch(format!("name `{bn}` vs `{pn}`")));
        }
        if bt.shape() != pt.shape() {
            return Err(CkptError::StateMismatch(format!(
                "shape mismatch for `{bn}`: {:?} vs {:?}",
                bt.shape(),
                pt.shape()
            )));
        }
    }
    let total_params: usize = pruned.total_elements();
    let nonzero: usize = pruned
        .iter()
        .map(|(_, t)| t.data().iter().filter(|v| v.to_bits() != 0).count())
        .sum();
    let dense_bytes = 4 * total_params as u64;
    let payload_bytes = 4 * nonzero as u64;
    let total_bytes = to_bytes(&compress_state(pruned)).len() as u64;
    Ok(SizeRatioReport {
        dense_bytes,
        payload_bytes,
        total_bytes,
        payload_ratio: dense_bytes as f64 / payload_bytes as f64,
        total_ratio: dense_bytes as f64 / total_bytes as f64,
    })
}
