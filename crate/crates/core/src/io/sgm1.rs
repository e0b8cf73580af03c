//! `SGM1` container: magic, version 1, dtype 0 (f32 LE), ndim 1..=4,
//! `ndim` u32 LE dims, then the row-major payload.

use std::path::Path;

use super::{atomic_write, read_bytes};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SGM1";
const VERSION: u8 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Sgm1Array {
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

fn format(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, msg: msg.into() }
}

pub fn encode_sgm1(dims: &[usize], values: &[f32]) -> Result<Vec<u8>> {
    if dims.is_empty() || dims.len() > 4 {
        return Err(Error::Shape(format!("SGM1 holds 1 to 4 dims, got {}", dims.len())));
    }
    if dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
        return Err(Error::Shape(format!("SGM1 dims must be in 1..=u32::MAX, got {dims:?}")));
    }
    if dims.iter().product::<usize>() != values.len() {
        return Err(Error::Shape(format!("dims {dims:?} do not hold {} values", values.len())));
    }
    let mut out = Vec::with_capacity(7 + 4 * dims.len() + 4 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, DTYPE_F32, dims.len() as u8]);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_sgm1(bytes: &[u8]) -> Result<Sgm1Array> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(format(0, "bad magic, expected \"SGM1\""));
    }
    match bytes.get(4) {
        Some(&VERSION) => {}
        Some(v) => return Err(format(4, format!("unsupported version {v}"))),
        None => return Err(format(4, "truncated header")),
    }
    match bytes.get(5) {
        Some(&DTYPE_F32) => {}
        Some(v) => return Err(format(5, format!("unsupported dtype {v}"))),
        None => return Err(format(5, "truncated header")),
    }
    let ndim = match bytes.get(6) {
        Some(&n @ 1..=4) => n as usize,
        Some(n) => return Err(format(6, format!("ndim must be 1..=4, got {n}"))),
        None => return Err(format(6, "truncated header")),
    };
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 7 + 4 * i;
        let raw = bytes.get(off..off + 4).ok_or_else(|| format(off, "truncated header"))?;
        let d = u32::from_le_bytes(raw.try_into().expect("four bytes")) as usize;
        if d == 0 {
            return Err(format(off, "zero-length dimension"));
        }
        dims.push(d);
    }
    let start = 7 + 4 * ndim;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|c| c.checked_mul(4).map(|_| c))
        .ok_or_else(|| format(7, "dims overflow"))?;
    let end = start + 4 * count;
    if bytes.len() < end {
        return Err(format(bytes.len(), format!("truncated payload, expected {end} bytes")));
    }
    if bytes.len() > end {
        return Err(format(end, format!("{} trailing bytes", bytes.len() - end)));
    }
    let values = bytes[start..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
        .collect();
    Ok(Sgm1Array { dims, values })
}

pub fn sgm1_write(path: &Path, dims: &[usize], values: &[f32]) -> Result<()> {
    atomic_write(path, &encode_sgm1(dims, values)?)
}

pub fn sgm1_read(path: &Path) -> Result<Sgm1Array> {
    decode_sgm1(&read_bytes(path)?).map_err(|e| match e {
        Error::Format { offset, msg } => {
            Error::Format { offset, msg: format!("{}: {msg}", path.display()) }
        }
        other => other,
    })
}

/// Narrows to f32 on write.
pub fn sgm1_write_f64(path: &Path, dims: &[usize], values: &[f64]) -> Result<()> {
    let v: Vec<f32> = values.iter().map(|&x| x as f32).collect();
    sgm1_write(path, dims, &v)
}

pub fn sgm1_read_f64(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let a = sgm1_read(path)?;
    Ok((a.dims, a.values.into_iter().map(f64::from).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_bytes() {
        let b = encode_sgm1(&[2, 3], &[0.0; 6]).unwrap();
        assert_eq!(
            &b[..15],
            &[0x53, 0x47, 0x4D, 0x31, 0x01, 0x00, 0x02, 0x02, 0x00, 0x00, 0x00, 0x03, 0x00, 0x00, 0x00]
        );
        assert_eq!(b.len(), 15 + 24);
    }

    #[test]
    fn round_trip_bits() {
        let v: Vec<f32> = (0..35).map(|i| (i as f32 * 0.37).sin() * 1e3).collect();
        let back = decode_sgm1(&encode_sgm1(&[7, 5], &v).unwrap()).unwrap();
        assert_eq!(back.dims, vec![7, 5]);
        assert!(back.values.iter().zip(&v).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn malformed() {
        let good = encode_sgm1(&[2, 2], &[1.0; 4]).unwrap();
        let off = |b: &[u8]| match decode_sgm1(b) {
            Err(Error::Format { offset, .. }) => offset,
            other => panic!("expected format error, got {other:?}"),
        };
        let mut b = good.clone();
        b[3] = b'X';
        assert_eq!(off(&b), 0);
        let mut b = good.clone();
        b[4] = 2;
        assert_eq!(off(&b), 4);
        let mut b = good.clone();
        b[5] = 1;
        assert_eq!(off(&b), 5);
        let mut b = good.clone();
        b[6] = 5;
        assert_eq!(off(&b), 6);
        assert_eq!(off(&good[..good.len() - 1]), good.len() as u64 - 1);
        assert_eq!(off(&good[..9]), 7);
        let mut b = good.clone();
        b.push(0);
        assert_eq!(off(&b), good.len() as u64);
        assert!(encode_sgm1(&[], &[]).is_err());
        assert!(encode_sgm1(&[2, 2], &[0.0; 3]).is_err());
    }
}
