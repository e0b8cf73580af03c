use std::path::PathBuf;

/// Every failure the toolkit reports. Variants map onto the CLI's exit-code
/// classes: all of them are data errors (exit 2) except where the CLI layer
/// decides otherwise.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("mask placement error: {0}")]
    Placement(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("singularity error: {0}")]
    Singularity(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("ssim undefined: {0}")]
    SsimUndefined(String),
    #[error("format error at byte offset {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Input(format!("{what}: non-finite value at index {i}"))),
        None => Ok(()),
    }
}
