//! Binary embedding file: 16-byte header then `count * dim` little-endian
//! `f32` values, row-major.
//!
//! | bytes | content               |
//! |-------|-----------------------|
//! | 0..4  | magic `CGEM`          |
//! | 4..8  | version `1`, u32 LE   |
//! | 8..12 | dim, u32 LE           |
//! | 12..16| count, u32 LE         |

use std::fs;
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CGEM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn encode_embeddings(matrix: &Matrix<f32>) -> Result<Vec<u8>> {
    if matrix.is_empty() {
        return Err(Error::invalid("cannot write an empty embedding matrix"));
    }
    matrix.check_rows()?;
    let dim = u32::try_from(matrix.dim()).map_err(|_| Error::invalid("dim exceeds u32"))?;
    let count = u32::try_from(matrix.rows()).map_err(|_| Error::invalid("count exceeds u32"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * matrix.as_flat().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for v in matrix.as_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4-byte slice"))
}

/// Decodes an embedding file image. `Err` carries a reason string that
/// callers attach to the file path.
pub fn decode_embeddings(bytes: &[u8]) -> std::result::Result<Matrix<f32>, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("truncated header: {} bytes", bytes.len()));
    }
    if &bytes[0..4] != MAGIC {
        return Err("bad magic, expected CGEM".into());
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let dim = u32_at(bytes, 8) as usize;
    let count = u32_at(bytes, 12) as usize;
    if dim == 0 || count == 0 {
        return Err(format!("empty matrix (dim={dim}, count={count})"));
    }
    let expected = HEADER_LEN + 4 * dim * count;
    if bytes.len() != expected {
        return Err(format!(
            "truncated payload: {} bytes, expected {expected} for dim={dim} count={count}",
            bytes.len()
        ));
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    let matrix = Matrix::from_flat(dim, data).map_err(|e| e.to_string())?;
    matrix.check_rows().map_err(|e| e.to_string())?;
    Ok(matrix)
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<Matrix<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}

/// Writes `matrix` and returns the number of bytes written.
pub fn write_embedding_file(path: impl AsRef<Path>, matrix: &Matrix<f32>) -> Result<usize> {
    let path = path.as_ref();
    let bytes = encode_embeddings(matrix)?;
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len())
}
