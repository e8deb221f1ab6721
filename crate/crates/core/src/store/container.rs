//! Binary embedding container and the labels file.
//!
//! Container layout, little-endian:
//!
//! ```text
//! [8]  magic "EMBV0001"
//! [8]  u64 rows
//! [8]  u64 dim
//! [1]  u8 normalized flag (0 or 1)
//! [7]  reserved, zero
//! [..] rows * dim f32 values, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ClassId, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EMBV0001";
pub const HEADER_LEN: usize = 32;

pub fn load_embedding_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embedding_matrix(&bytes)
}

pub fn decode_embedding_matrix(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::BadHeader(format!(
            "header needs {HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let flag = bytes[24];
    if flag > 1 {
        return Err(Error::BadHeader(format!("normalized flag is {flag}")));
    }
    if bytes[25..HEADER_LEN].iter().any(|&b| b != 0) {
        return Err(Error::BadHeader("reserved bytes are not zero".into()));
    }
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::BadHeader(format!("rows x dim overflows ({rows} x {dim})")))?;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if actual != expected {
        return Err(Error::TruncatedPayload { expected, actual });
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = EmbeddingMatrix::new(rows as usize, dim as usize, data)?;
    if flag == 1 {
        m.assume_unit_norm()
    } else {
        Ok(m)
    }
}

pub fn encode_embedding_matrix(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.as_slice().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u64).to_le_bytes());
    out.push(u8::from(m.is_normalized()));
    out.extend_from_slice(&[0u8; 7]);
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_embedding_matrix(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_embedding_matrix(m))
        .map_err(|e| Error::io(path, e))
}

/// Labels file: one u32 little-endian class id per image row.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<ClassId>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::BadHeader(format!(
            "labels file {} has {} bytes, not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_labels(labels: &[ClassId], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = labels.iter().flat_map(|l| l.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
