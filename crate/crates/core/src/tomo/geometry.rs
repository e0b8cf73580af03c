use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{ensure_finite, Error, Result};

/// Smooth surrogate for the line delta. Both shapes integrate to one over the
/// detector coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// Linear hat with half-width `bandwidth` bins.
    #[default]
    Triangle,
    /// Gaussian with standard deviation `bandwidth` bins, truncated at 4 sigma.
    Gaussian,
}

const GAUSS_TRUNC: f64 = 4.0;

/// Parallel-beam geometry: projection angles (radians, strictly increasing in
/// `[0, pi)`) and a centred line detector. Bin `k` is centred at
/// `(k - (n_det-1)/2) * det_spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGeometry {
    angles: Vec<f64>,
    n_det: usize,
    det_spacing: f64,
    kernel: Kernel,
    bandwidth: f64,
    cos_sin: Vec<(f64, f64)>,
}

impl ProjectionGeometry {
    pub fn new(
        angles: Vec<f64>,
        n_det: usize,
        det_spacing: f64,
        kernel: Kernel,
        bandwidth: f64,
    ) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::Geometry("at least one projection angle is required".into()));
        }
        ensure_finite(&angles, "angles")?;
        if angles.iter().any(|&a| !(0.0..PI).contains(&a)) {
            return Err(Error::Geometry("angles must lie in [0, pi)".into()));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Geometry("angles must be strictly increasing".into()));
        }
        if n_det == 0 {
            return Err(Error::Geometry("detector needs at least one bin".into()));
        }
        if !(det_spacing > 0.0 && det_spacing.is_finite()) {
            return Err(Error::Geometry(format!("detector spacing must be > 0, got {det_spacing}")));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Geometry(format!("kernel bandwidth must be > 0, got {bandwidth}")));
        }
        let cos_sin = angles.iter().map(|a| (a.cos(), a.sin())).collect();
        Ok(Self { angles, n_det, det_spacing, kernel, bandwidth, cos_sin })
    }

    /// `n_angles` uniform angles `a * pi / n_angles`, triangle kernel of one bin.
    pub fn uniform(n_angles: usize, n_det: usize, det_spacing: f64) -> Result<Self> {
        Self::new(uniform_angles(n_angles), n_det, det_spacing, Kernel::Triangle, 1.0)
    }

    /// Uniform geometry whose detector covers the image diagonal of an
    /// `size_n`-pixel grid with unit-ratio bins.
    pub fn for_image(size_n: usize, spacing: f64, n_angles: usize) -> Result<Self> {
        Self::uniform(n_angles, default_n_det(size_n), spacing)
    }

    pub fn with_kernel(mut self, kernel: Kernel, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Geometry(format!("kernel bandwidth must be > 0, got {bandwidth}")));
        }
        self.kernel = kernel;
        self.bandwidth = bandwidth;
        Ok(self)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_det(&self) -> usize {
        self.n_det
    }

    pub fn det_spacing(&self) -> f64 {
        self.det_spacing
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub(crate) fn cos_sin(&self, a: usize) -> (f64, f64) {
        self.cos_sin[a]
    }

    /// Physical offset of detector bin `k`.
    pub fn bin_center(&self, k: usize) -> f64 {
        (k as f64 - (self.n_det as f64 - 1.0) / 2.0) * self.det_spacing
    }

    /// Half-extent of the detector, to the outer bin edges.
    pub fn half_span(&self) -> f64 {
        self.n_det as f64 * self.det_spacing / 2.0
    }

    /// Kernel reach in physical units (beyond which weights vanish).
    pub fn kernel_support(&self) -> f64 {
        match self.kernel {
            Kernel::Triangle => self.bandwidth * self.det_spacing,
            Kernel::Gaussian => GAUSS_TRUNC * self.bandwidth * self.det_spacing,
        }
    }

    /// True when every pixel of the grid, corners included, lands on the
    /// detector. Callers are expected to warn otherwise.
    pub fn covers_diagonal(&self, size_n: usize, spacing: f64) -> bool {
        let half_diag = std::f64::consts::SQRT_2 * size_n as f64 * spacing / 2.0;
        half_diag <= self.half_span()
    }

    /// Forward/backprojection precondition: the inscribed disc of the image
    /// must project inside the detector.
    pub(crate) fn check_image(&self, size_n: usize, spacing: f64) -> Result<()> {
        let half = size_n as f64 * spacing / 2.0;
        if half > self.half_span() + 1e-12 {
            return Err(Error::Geometry(format!(
                "image half-width {half} exceeds detector half-span {}",
                self.half_span()
            )));
        }
        Ok(())
    }

    /// Visit every detector bin touched by a point at physical offset `s`,
    /// with its kernel weight in 1/length units. Shared by the forward and
    /// adjoint operators so the two are exact transposes.
    #[inline]
    pub(crate) fn for_each_bin(&self, s: f64, mut f: impl FnMut(usize, f64)) {
        let u = s / self.det_spacing + (self.n_det as f64 - 1.0) / 2.0;
        let b = self.bandwidth;
        let reach = match self.kernel {
            Kernel::Triangle => b,
            Kernel::Gaussian => GAUSS_TRUNC * b,
        };
        let lo = (u - reach).ceil().max(0.0);
        let hi = (u + reach).floor().min(self.n_det as f64 - 1.0);
        if hi < lo {
            return;
        }
        let norm = 1.0 / (b * self.det_spacing);
        for k in lo as usize..=hi as usize {
            let d = (k as f64 - u) / b;
            let w = match self.kernel {
                Kernel::Triangle => 1.0 - d.abs(),
                Kernel::Gaussian => (-0.5 * d * d).exp() * std::f64::consts::FRAC_1_SQRT_2 / PI.sqrt(),
            };
            if w > 0.0 {
                f(k, w * norm);
            }
        }
    }
}

pub fn uniform_angles(n_angles: usize) -> Vec<f64> {
    (0..n_angles).map(|a| a as f64 * PI / n_angles as f64).collect()
}

/// Detector bins needed to cover the diagonal of a `size_n` grid at unit
/// pixel/bin ratio, plus kernel margin.
pub fn default_n_det(size_n: usize) -> usize {
    (std::f64::consts::SQRT_2 * size_n as f64).ceil() as usize + 3
}

/// Line-integral data on a [`ProjectionGeometry`]. Stored `n_det x n_angles`
/// row-major: `values[k * n_angles + a]`, angle index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: Arc<ProjectionGeometry>,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn new(geometry: Arc<ProjectionGeometry>, values: Vec<f64>) -> Result<Self> {
        let want = geometry.n_det() * geometry.n_angles();
        if values.len() != want {
            return Err(Error::Geometry(format!(
                "sinogram needs {want} values ({} bins x {} angles), got {}",
                geometry.n_det(),
                geometry.n_angles(),
                values.len()
            )));
        }
        ensure_finite(&values, "sinogram")?;
        Ok(Self { geometry, values })
    }

    pub fn zeros(geometry: Arc<ProjectionGeometry>) -> Self {
        let n = geometry.n_det() * geometry.n_angles();
        Self { geometry, values: vec![0.0; n] }
    }

    pub fn geometry(&self) -> &Arc<ProjectionGeometry> {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `(n_det, n_angles)`: rows then columns.
    pub fn shape(&self) -> (usize, usize) {
        (self.geometry.n_det(), self.geometry.n_angles())
    }

    pub fn get(&self, k: usize, a: usize) -> f64 {
        self.values[k * self.geometry.n_angles() + a]
    }

    pub fn set(&mut self, k: usize, a: usize, v: f64) {
        let na = self.geometry.n_angles();
        self.values[k * na + a] = v;
    }

    /// Same geometry object or an equal one.
    pub fn same_geometry(&self, other: &Sinogram) -> bool {
        Arc::ptr_eq(&self.geometry, &other.geometry) || *self.geometry == *other.geometry
    }

    pub(crate) fn check_same(&self, other: &Sinogram, what: &str) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::Geometry(format!("{what}: sinogram geometries differ")))
        }
    }

    /// Rebuild with new values on the same geometry.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Sinogram> {
        Sinogram::new(self.geometry.clone(), values)
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}
