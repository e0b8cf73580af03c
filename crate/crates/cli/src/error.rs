use std::fmt;
use std::path::{Path, PathBuf};

/// Exit 1 for anything the caller got wrong on the command line or in the
/// run configuration, exit 2 for failures on the data itself.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data {
        stage: &'static str,
        file: Option<PathBuf>,
        source: projdiff::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data { stage, file: Some(p), source } => {
                write!(f, "stage `{stage}` failed on {}: {source}", p.display())
            }
            CliError::Data { stage, file: None, source } => write!(f, "stage `{stage}` failed: {source}"),
        }
    }
}

/// Attach the failing stage (and file) to a library error.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
    fn on_file(self, stage: &'static str, file: &Path) -> CliResult<T>;
}

impl<T> Stage<T> for projdiff::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Data { stage, file: None, source })
    }

    fn on_file(self, stage: &'static str, file: &Path) -> CliResult<T> {
        self.map_err(|source| CliError::Data { stage, file: Some(file.to_path_buf()), source })
    }
}
