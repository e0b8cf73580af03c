use std::path::Path;

use super::{atomic_write, read_bytes};
use crate::error::{ensure_finite, Error, Result};

/// Raw sample values as stored in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub rows: usize,
    pub cols: usize,
    pub maxval: u16,
    pub values: Vec<u16>,
}

/// Binary 16-bit PGM. With `normalize`, values are min-max mapped onto
/// `0..=65535` (all zero when the image is constant); otherwise they are
/// clamped to `[0, 1]` and scaled. Returns `true` when normalisation hit
/// the constant-image case.
pub fn export_pgm(path: &Path, rows: usize, cols: usize, values: &[f64], normalize: bool) -> Result<bool> {
    if rows * cols != values.len() || rows == 0 || cols == 0 {
        return Err(Error::Shape(format!("{rows}x{cols} does not hold {} values", values.len())));
    }
    ensure_finite(values, "PGM export")?;
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let degenerate = normalize && hi == lo;
    let map = |v: f64| -> u16 {
        let u = if !normalize {
            v.clamp(0.0, 1.0)
        } else if degenerate {
            0.0
        } else {
            (v - lo) / (hi - lo)
        };
        (u * 65535.0).round() as u16
    };
    let mut out = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    out.reserve(2 * values.len());
    for &v in values {
        out.extend_from_slice(&map(v).to_be_bytes());
    }
    atomic_write(path, &out)?;
    Ok(degenerate)
}

/// Reads binary P5 with 8- or 16-bit samples. Comments are not supported.
pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    let bytes = read_bytes(path)?;
    let mut pos = 0;
    let mut token = |what: &str| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format { offset: start as u64, msg: format!("missing PGM {what}") });
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token("magic")? != "P5" {
        return Err(Error::Format { offset: 0, msg: format!("{}: not a binary PGM", path.display()) });
    }
    let mut num = |what: &str| -> Result<usize> {
        let t = token(what)?;
        t.parse().map_err(|_| Error::Format { offset: 0, msg: format!("bad PGM {what} '{t}'") })
    };
    let cols = num("width")?;
    let rows = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format { offset: 0, msg: format!("PGM maxval {maxval} out of range") });
    }
    let data_start = pos + 1;
    let width = if maxval < 256 { 1 } else { 2 };
    let need = data_start + rows * cols * width;
    if bytes.len() < need {
        return Err(Error::Format { offset: bytes.len() as u64, msg: "truncated PGM payload".into() });
    }
    let data = &bytes[data_start..need];
    let values = if width == 1 {
        data.iter().map(|&b| b as u16).collect()
    } else {
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    Ok(PgmImage { rows, cols, maxval: maxval as u16, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkerboard_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        assert!(!export_pgm(&p, 2, 2, &[0.0, 1.0, 1.0, 0.0], true).unwrap());
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n65535\n"));
        let img = read_pgm(&p).unwrap();
        assert_eq!(img.values, vec![0, 65535, 65535, 0]);
        assert!(export_pgm(&p, 2, 2, &[3.0; 4], true).unwrap());
        assert_eq!(read_pgm(&p).unwrap().values, vec![0; 4]);
        export_pgm(&p, 1, 3, &[-1.0, 0.5, 2.0], false).unwrap();
        assert_eq!(read_pgm(&p).unwrap().values, vec![0, 32768, 65535]);
    }
}
