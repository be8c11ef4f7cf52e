//! Per-utterance feature matrices and the `FEA1` binary container.
//!
//! Layout (little-endian): magic `FEA1`, `u32` frame count, `u32` dimension,
//! then `frames * dim` IEEE-754 `f32` values in frame-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic, ByteReader, ByteWriter};

pub const FEAT_MAGIC: &[u8; 4] = b"FEA1";
const HEADER_LEN: usize = 12;

/// A `frames x dim` matrix of acoustic features for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    utterance_id: String,
    frames: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(utterance_id: impl Into<String>, frames: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        let utterance_id = utterance_id.into();
        let invalid = |message: String| Error::Features {
            utterance: utterance_id.clone(),
            message,
        };
        if frames == 0 || dim == 0 {
            return Err(invalid(format!("shape {frames}x{dim} has an empty axis")));
        }
        if data.len() != frames * dim {
            return Err(invalid(format!(
                "payload has {} values, shape {frames}x{dim} needs {}",
                data.len(),
                frames * dim
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at frame {}, dim {}", i / dim, i % dim)));
        }
        Ok(Self {
            utterance_id,
            frames,
            dim,
            data,
        })
    }

    pub fn from_rows(utterance_id: impl Into<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let data: Vec<f32> = rows.iter().flatten().copied().collect();
        Self::new(utterance_id, rows.len(), dim, data)
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Frames `start..=end` as a new matrix.
    pub fn excise(&self, utterance_id: impl Into<String>, start: usize, end: usize) -> Result<Self> {
        if start > end || end >= self.frames {
            return Err(Error::WindowOutOfRange {
                start,
                end,
                frames: self.frames,
            });
        }
        let data = self.data[start * self.dim..(end + 1) * self.dim].to_vec();
        Self::new(utterance_id, end - start + 1, self.dim, data)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(FEAT_MAGIC);
        w.u32(self.frames as u32);
        w.u32(self.dim as u32);
        for &v in &self.data {
            w.f32(v);
        }
        w.buf
    }

    pub fn decode(bytes: &[u8], utterance_id: impl Into<String>, path: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, path);
        let magic = r.take(4, "magic")?;
        if magic != FEAT_MAGIC {
            return Err(r.error(0, format!("bad magic {magic:?}, expected \"FEA1\"")));
        }
        let frames = r.u32("frame count")? as usize;
        let dim = r.u32("dimension")? as usize;
        if frames == 0 || dim == 0 {
            return Err(r.error(4, format!("shape {frames}x{dim} has an empty axis")));
        }
        let count = frames
            .checked_mul(dim)
            .ok_or_else(|| r.error(4, "shape overflows"))?;
        let mut data = Vec::with_capacity(count.min(r.remaining() / 4));
        for i in 0..count {
            let at = r.offset();
            let v = r.f32("payload").map_err(|_| {
                r.error(
                    at,
                    format!("truncated payload: value {} of {count} missing", i + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(r.error(at, format!("non-finite value {v}")));
            }
            data.push(v);
        }
        r.finish()?;
        debug_assert_eq!(r.offset() as usize, HEADER_LEN + 4 * count);
        Self::new(utterance_id, frames, dim, data)
    }
}

/// Reads a FEAT file; the utterance id is the file stem.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    FeatureMatrix::decode(&bytes, id, path)
}

pub fn write_features(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &matrix.encode())
}
