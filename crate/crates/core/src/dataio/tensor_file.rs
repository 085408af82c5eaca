//! Binary tensor files.
//!
//! Layout, little-endian throughout:
//!
//! | bytes          | field                              |
//! |----------------|------------------------------------|
//! | 4              | magic `MXTN`                       |
//! | 1              | version (1)                        |
//! | 1              | dtype (0 = f32)                    |
//! | 1              | rank                               |
//! | 8 * rank       | dims, u64                          |
//! | 4 * prod(dims) | payload, IEEE-754 f32, row-major   |

use std::path::Path;

use crate::embedding::FeatureMatrix;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MXTN";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;

const FIXED_HEADER: usize = 7;

pub fn encode_tensor(dims: &[usize], data: &[f32]) -> Vec<u8> {
    assert!(dims.len() <= u8::MAX as usize, "rank exceeds 255");
    assert_eq!(dims.iter().product::<usize>(), data.len());
    let mut out = Vec::with_capacity(FIXED_HEADER + 8 * dims.len() + 4 * data.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f32>)> {
    let short = |expected: usize| Error::LengthMismatch {
        expected: expected as u64,
        actual: bytes.len() as u64,
    };
    if bytes.len() < 4 {
        return Err(short(FIXED_HEADER));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("four bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(short(FIXED_HEADER));
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(bytes[5]));
    }
    let rank = bytes[6] as usize;
    let header = FIXED_HEADER + 8 * rank;
    if bytes.len() < header {
        return Err(short(header));
    }
    let dims: Vec<u64> = bytes[FIXED_HEADER..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    let expected = dims
        .iter()
        .try_fold(4u64, |acc, &d| acc.checked_mul(d))
        .and_then(|p| p.checked_add(header as u64));
    let payload = (bytes.len() - header) as u64;
    match expected {
        Some(total) if total == bytes.len() as u64 => {}
        Some(total) => {
            return Err(Error::LengthMismatch {
                expected: total - header as u64,
                actual: payload,
            })
        }
        None => {
            return Err(Error::LengthMismatch {
                expected: u64::MAX,
                actual: payload,
            })
        }
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
        .collect();
    Ok((dims.into_iter().map(|d| d as usize).collect(), data))
}

pub fn write_tensor_file(path: &Path, dims: &[usize], data: &[f32]) -> Result<()> {
    std::fs::write(path, encode_tensor(dims, data))
        .map_err(|e| Error::io(format!("writing tensor {}", path.display()), e))
}

pub fn read_tensor_file(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::io(format!("reading tensor {}", path.display()), e))?;
    decode_tensor(&bytes)
}

/// Reads a rank-2 tensor as a feature matrix.
pub fn read_tensor(path: &Path) -> Result<FeatureMatrix> {
    let (dims, data) = read_tensor_file(path)?;
    matrix_from_parts(&dims, data)
}

pub fn write_tensor(m: &FeatureMatrix, path: &Path) -> Result<()> {
    write_tensor_file(path, &[m.rows(), m.cols()], m.data())
}

pub(crate) fn matrix_from_parts(dims: &[usize], data: Vec<f32>) -> Result<FeatureMatrix> {
    if dims.len() != 2 {
        return Err(Error::RankMismatch {
            expected: 2,
            actual: dims.len(),
        });
    }
    FeatureMatrix::new(dims[0], dims[1], data)
}
