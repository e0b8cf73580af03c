use std::path::Path;

use super::atomic_write;
use crate::error::{Error, Result};

/// Comma-separated, header row, LF endings. Fields must not contain commas
/// or line breaks.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let bad = |f: &str| f.contains([',', '\n', '\r']);
    if header.iter().any(|h| bad(h)) {
        return Err(Error::Input("CSV header field contains a separator".into()));
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        if r.len() != header.len() {
            return Err(Error::Shape(format!("CSV row {i} has {} fields, header has {}", r.len(), header.len())));
        }
        if r.iter().any(|f| bad(f)) {
            return Err(Error::Input(format!("CSV row {i} contains a separator")));
        }
        out.push_str(&r.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}
