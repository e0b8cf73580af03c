use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::read_bytes;
use crate::error::{Error, Result};

/// Every key a run configuration may set. Anything else is rejected.
pub const CONFIG_KEYS: &[&str] = &[
    // geometry
    "size",
    "spacing",
    "n_angles",
    "n_det",
    "det_spacing",
    "kernel",
    "bandwidth",
    // augmentation
    "k",
    "block_w",
    "block_h",
    "norm_mode",
    "max_attempts",
    // tma
    "recon",
    "recon_size",
    "mlem_iters",
    "threshold",
    "lower_threshold",
    // diffusion
    "t_max",
    "beta_start",
    "beta_end",
    "sampler",
    "steps",
    "eta",
    "t_start",
    "bridge_sigma_min",
    "bridge_sigma_max",
    "bridge_mode",
    // pacbayes
    "n",
    "delta",
    "sigma_p_sq",
    "c",
    "m",
    // paths
    "input",
    "output",
    "checkpoint",
];

/// Parsed `key = value` lines; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config { line: line_no, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected 'key = value'".into()))?;
            let (k, v) = (k.trim(), v.trim());
            if !CONFIG_KEYS.contains(&k) {
                return Err(err(format!("unknown key '{k}'")));
            }
            if v.is_empty() {
                return Err(err(format!("empty value for '{k}'")));
            }
            if entries.insert(k.to_string(), (v.to_string(), line_no)).is_some() {
                return Err(err(format!("duplicate key '{k}'")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|e| Error::Config { line: 0, msg: format!("{}: not UTF-8: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| Error::Config {
                line: *line,
                msg: format!("cannot parse '{v}' for '{key}'"),
            }),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
