//! File formats: the SGM1 array container, 16-bit PGM, CSV, `key = value`
//! run configuration and network checkpoints. Every writer goes through a
//! temporary file in the destination directory followed by a rename, so a
//! failed command never leaves a partial output behind.

mod checkpoint;
mod config;
mod csv;
mod pgm;
mod sgm1;

pub use checkpoint::{decode_checkpoint, load_checkpoint, save_checkpoint};
pub use config::{RunConfig, CONFIG_KEYS};
pub use csv::write_csv;
pub use pgm::{export_pgm, read_pgm, PgmImage};
pub use sgm1::{
    decode_sgm1, encode_sgm1, sgm1_read, sgm1_read_f64, sgm1_write, sgm1_write_f64, Sgm1Array,
};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Write `bytes` to a temporary file next to `path`, then rename over it.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
