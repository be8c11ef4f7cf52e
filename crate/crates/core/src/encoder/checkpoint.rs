//! Checkpoint container.
//!
//! Layout (little-endian): magic `ASE1`, `u32` version, `u32` length plus
//! UTF-8 JSON architecture header, `u32` tensor count, then per tensor a
//! `u32`-prefixed UTF-8 name, `u32` rank, `rank` `u32` dims and an `f32`
//! payload. Parameters live on the single-precision grid, so the round trip
//! is exact.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::{Architecture, EmbeddingModel};
use super::tensor::Parameters;
use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic, ByteReader, ByteWriter};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ASE1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &EmbeddingModel) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    let header = serde_json::to_string(model.architecture()).expect("architecture serializes");
    w.string(&header);
    let tensors = model.named_tensors();
    w.u32(tensors.len() as u32);
    for (name, t) in tensors {
        w.string(&name);
        w.u32(t.dims().len() as u32);
        for &d in t.dims() {
            w.u32(d as u32);
        }
        for &v in t.data() {
            w.f32(v as f32);
        }
    }
    w.buf
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<EmbeddingModel> {
    let mut r = ByteReader::new(bytes, path);
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(r.error(0, format!("bad magic {magic:?}, expected \"ASE1\"")));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let at = r.offset();
    let header = r.string("architecture header")?;
    let arch: Architecture =
        serde_json::from_str(&header).map_err(|e| r.error(at, format!("bad architecture header: {e}")))?;
    let mut model = EmbeddingModel::zeros(arch)?;
    let count_at = r.offset();
    let count = r.u32("tensor count")? as usize;
    let mut slots = model.named_tensors_mut();
    if count != slots.len() {
        return Err(r.error(
            count_at,
            format!("{count} tensors stored, architecture needs {}", slots.len()),
        ));
    }
    for (expected_name, tensor) in slots.iter_mut() {
        let at = r.offset();
        let name = r.string("tensor name")?;
        if &name != expected_name {
            return Err(r.error(at, format!("tensor {name:?} where {expected_name:?} was expected")));
        }
        let at = r.offset();
        let rank = r.u32("rank")? as usize;
        let dims = (0..rank).map(|_| r.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims != tensor.dims() {
            return Err(r.error(at, format!("tensor {name} has shape {dims:?}, expected {:?}", tensor.dims())));
        }
        for v in tensor.data_mut() {
            *v = r.f32("tensor payload")? as f64;
        }
    }
    drop(slots);
    r.finish()?;
    Ok(model)
}

pub fn save_checkpoint(model: &EmbeddingModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    let path = path.as_ref();
    decode_checkpoint(&read_bytes(path)?, path)
}

/// SHA-256 of the serialized checkpoint; identifies the model that
/// produced an index or a query embedding.
pub fn fingerprint(model: &EmbeddingModel) -> [u8; 32] {
    Sha256::digest(encode_checkpoint(model)).into()
}
