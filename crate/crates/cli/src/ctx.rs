use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::ValueEnum;
use projdiff::io::{self, RunConfig};
use projdiff::tomo::{uniform_angles, ImageGrid, Kernel, ProjectionGeometry, Sinogram};

use crate::args::{GeomOpts, KernelArg};
use crate::error::{CliError, CliResult, Stage};

/// Per-invocation state: the stage name used in diagnostics, the optional
/// run configuration and the seed. Flags always win over config values.
pub struct Ctx {
    pub stage: &'static str,
    pub seed: u64,
    cfg: RunConfig,
    cfg_path: Option<PathBuf>,
}

impl Ctx {
    pub fn new(stage: &'static str, seed: u64, config: Option<PathBuf>) -> CliResult<Self> {
        let cfg = match &config {
            Some(p) => RunConfig::load(p).map_err(|e| match e {
                projdiff::Error::Io { .. } => CliError::Data { stage, file: Some(p.clone()), source: e },
                e => CliError::Usage(format!("config {}: {e}", p.display())),
            })?,
            None => RunConfig::default(),
        };
        Ok(Self { stage, seed, cfg, cfg_path: config })
    }

    fn cfg_err(&self, key: &str, msg: impl std::fmt::Display) -> CliError {
        let p = self.cfg_path.as_deref().unwrap_or(Path::new("<none>"));
        CliError::Usage(format!("config {}: key `{key}`: {msg}", p.display()))
    }

    pub fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.cfg.get::<T>(key).map_err(|e| self.cfg_err(key, e))
    }

    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T> {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_enum<T: ValueEnum>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.cfg.get_str(key) {
            Some(s) => T::from_str(s, true).map_err(|e| self.cfg_err(key, e)),
            None => Ok(default),
        }
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str, what: &str) -> CliResult<PathBuf> {
        self.opt(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("{}: missing {what} (flag or config key `{key}`)", self.stage)))
    }

    pub fn input(&self, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        self.path(flag, "input", "input file")
    }

    pub fn output(&self, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        self.path(flag, "output", "output file")
    }

    /// Geometry for `n_angles` uniform angles and `n_det` bins.
    pub fn geometry(&self, g: &GeomOpts, n_angles: usize, n_det: usize, spacing: f64) -> CliResult<Arc<ProjectionGeometry>> {
        let ds = self.pick(g.det_spacing, "det_spacing", spacing)?;
        let kernel = match self.pick_enum(g.kernel, "kernel", KernelArg::Triangle)? {
            KernelArg::Triangle => Kernel::Triangle,
            KernelArg::Gaussian => Kernel::Gaussian,
        };
        let bw = self.pick(g.bandwidth, "bandwidth", 1.0)?;
        let geom = ProjectionGeometry::new(uniform_angles(n_angles), n_det, ds, kernel, bw).stage(self.stage)?;
        Ok(Arc::new(geom))
    }

    pub fn read_image(&self, path: &Path, spacing: f64) -> CliResult<ImageGrid> {
        let (dims, values) = if is_pgm(path) {
            let p = io::read_pgm(path).on_file(self.stage, path)?;
            let m = f64::from(p.maxval);
            (vec![p.rows, p.cols], p.values.iter().map(|&v| f64::from(v) / m).collect())
        } else {
            io::sgm1_read_f64(path).on_file(self.stage, path)?
        };
        if dims.len() != 2 || dims[0] != dims[1] {
            return Err(shape_err(self.stage, path, format!("expected a square 2-D image, got dims {dims:?}")));
        }
        ImageGrid::new(dims[0], spacing, values).on_file(self.stage, path)
    }

    /// A sinogram file is `n_det x n_angles`; angles are taken as uniform.
    pub fn read_sino(&self, path: &Path, g: &GeomOpts, spacing: f64) -> CliResult<Sinogram> {
        let (dims, values) = io::sgm1_read_f64(path).on_file(self.stage, path)?;
        if dims.len() != 2 {
            return Err(shape_err(self.stage, path, format!("expected a 2-D sinogram, got dims {dims:?}")));
        }
        let geom = self.geometry(g, dims[1], dims[0], spacing)?;
        Sinogram::new(geom, values).on_file(self.stage, path)
    }

    /// SGM1, or normalised PGM when the path ends in `.pgm`.
    pub fn write_image(&self, path: &Path, img: &ImageGrid) -> CliResult<()> {
        let n = img.size();
        if is_pgm(path) {
            return self.write_pgm(path, n, n, img.values());
        }
        io::sgm1_write_f64(path, &[n, n], img.values()).on_file(self.stage, path)
    }

    pub fn write_sino(&self, path: &Path, s: &Sinogram) -> CliResult<()> {
        let (nd, na) = s.shape();
        io::sgm1_write_f64(path, &[nd, na], s.values()).on_file(self.stage, path)
    }

    pub fn write_pgm(&self, path: &Path, rows: usize, cols: usize, values: &[f64]) -> CliResult<()> {
        io::export_pgm(path, rows, cols, values, true).on_file(self.stage, path)?;
        Ok(())
    }

    pub fn write_text(&self, path: &Path, text: &str) -> CliResult<()> {
        io::atomic_write(path, text.as_bytes()).on_file(self.stage, path)
    }
}

pub fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn shape_err(stage: &'static str, path: &Path, msg: String) -> CliError {
    CliError::Data { stage, file: Some(path.to_path_buf()), source: projdiff::Error::Shape(msg) }
}
