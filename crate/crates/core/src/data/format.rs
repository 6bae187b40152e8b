//! DSQF binary feature files.
//!
//! Layout (little-endian): `b"DSQF"`, version `u32` (= 1), frames `u32`,
//! dims `u32`, then frames×dims `f32` values row-major. Values are widened to
//! `f64` on load.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FEATURE_MAGIC: &[u8; 4] = b"DSQF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_features(features: &Matrix) -> Result<Vec<u8>> {
    let (t, d) = features.shape();
    if t == 0 || d == 0 {
        return Err(Error::Parameter(format!("feature matrix must be non-empty, got {t}x{d}")));
    }
    let t32 = u32::try_from(t).map_err(|_| Error::Parameter(format!("{t} frames exceeds u32")))?;
    let d32 = u32::try_from(d).map_err(|_| Error::Parameter(format!("{d} dims exceeds u32")))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * t * d);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&t32.to_le_bytes());
    buf.extend_from_slice(&d32.to_le_bytes());
    for (i, &v) in features.data().iter().enumerate() {
        let narrow = v as f32;
        if !v.is_finite() || !narrow.is_finite() {
            return Err(Error::Parameter(format!(
                "feature value {v} at element {i} is not representable as a finite f32"
            )));
        }
        buf.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(buf)
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4-byte slice"))
}

pub fn decode_features(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", &bytes[..4])));
    }
    let version = read_u32(bytes, 4);
    if version != FEATURE_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let t = read_u32(bytes, 8) as usize;
    let d = read_u32(bytes, 12) as usize;
    if t == 0 {
        return Err(Error::format(8, "zero frames"));
    }
    if d == 0 {
        return Err(Error::format(12, "zero dimensions"));
    }
    let payload_len = t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(8, format!("dimension overflow: {t} x {d}")))?;
    let available = bytes.len() - HEADER_LEN;
    if available < payload_len {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: expected {payload_len} bytes, found {available}"),
        ));
    }
    if available > payload_len {
        return Err(Error::format(
            (HEADER_LEN + payload_len) as u64,
            format!("{} trailing bytes", available - payload_len),
        ));
    }
    let mut data = Vec::with_capacity(t * d);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(Error::format((HEADER_LEN + 4 * i) as u64, "non-finite value"));
        }
        data.push(f64::from(v));
    }
    Matrix::from_vec(t, d, data)
}

pub fn write_feature_file(path: impl AsRef<Path>, features: &Matrix) -> Result<()> {
    let bytes = encode_features(features)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<Matrix> {
    let bytes = fs::read(path)?;
    decode_features(&bytes)
}
