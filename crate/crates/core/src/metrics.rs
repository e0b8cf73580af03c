//! PSNR, SSIM and RMSE between a reference and a test image.

use crate::error::{Error, Result};
use crate::tomo::ImageGrid;

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Peak {
    /// Maximum of the reference image.
    #[default]
    RefMax,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    /// `f64::INFINITY` when the images are identical.
    pub psnr_db: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub peak_used: f64,
}

impl QualityReport {
    pub fn mse(&self) -> f64 {
        self.rmse * self.rmse
    }
}

fn check_shapes(reference: &ImageGrid, test: &ImageGrid) -> Result<()> {
    if reference.size() != test.size() {
        return Err(Error::Geometry(format!(
            "image sizes differ: {} vs {}",
            reference.size(),
            test.size()
        )));
    }
    reference.check_finite()?;
    test.check_finite()
}

pub fn rmse(reference: &ImageGrid, test: &ImageGrid) -> Result<f64> {
    check_shapes(reference, test)?;
    let (a, b) = (reference.values(), test.values());
    let sum: f64 = a.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// `10 log10(peak^2 / mse)`, `+inf` at `mse = 0`.
pub fn psnr(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable Gaussian filter over the valid region.
fn filter_valid(img: &[f64], n: usize, w: &[f64; WINDOW]) -> Vec<f64> {
    let m = n + 1 - WINDOW;
    let mut rows = vec![0.0; n * m];
    for r in 0..n {
        for c in 0..m {
            rows[r * m + c] = (0..WINDOW).map(|k| w[k] * img[r * n + c + k]).sum();
        }
    }
    let mut out = vec![0.0; m * m];
    for r in 0..m {
        for c in 0..m {
            out[r * m + c] = (0..WINDOW).map(|k| w[k] * rows[(r + k) * m + c]).sum();
        }
    }
    out
}

/// Mean local SSIM over 11x11 Gaussian windows (sigma 1.5), valid region.
pub fn ssim(reference: &ImageGrid, test: &ImageGrid, peak: f64) -> Result<f64> {
    check_shapes(reference, test)?;
    let n = reference.size();
    if n < WINDOW {
        return Err(Error::Shape(format!("SSIM needs images of at least {WINDOW}x{WINDOW}")));
    }
    let (x, y) = (reference.values(), test.values());
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::SsimUndefined("reference image is constant".into()));
    }
    let w = gaussian_window();
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| a * b).collect() };
    let mx = filter_valid(x, n, &w);
    let my = filter_valid(y, n, &w);
    let mxx = filter_valid(&prod(x, x), n, &w);
    let myy = filter_valid(&prod(y, y), n, &w);
    let mxy = filter_valid(&prod(x, y), n, &w);
    let (c1, c2) = ((K1 * peak).powi(2), (K2 * peak).powi(2));
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

pub fn quality_metrics(reference: &ImageGrid, test: &ImageGrid, peak: Peak) -> Result<QualityReport> {
    check_shapes(reference, test)?;
    let peak_used = match peak {
        Peak::RefMax => reference.values().iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Peak::Fixed(v) => v,
    };
    if !(peak_used > 0.0 && peak_used.is_finite()) {
        return Err(Error::Input(format!("peak must be positive, got {peak_used}")));
    }
    let rmse = rmse(reference, test)?;
    Ok(QualityReport {
        psnr_db: psnr(rmse * rmse, peak_used),
        ssim: ssim(reference, test, peak_used)?,
        rmse,
        peak_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> ImageGrid {
        let v = (0..n * n).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        ImageGrid::new(n, 1.0, v).unwrap()
    }

    #[test]
    fn identity() {
        let a = ramp(16);
        let q = quality_metrics(&a, &a, Peak::RefMax).unwrap();
        assert_eq!(q.rmse, 0.0);
        assert_eq!(q.psnr_db, f64::INFINITY);
        assert_eq!(q.ssim, 1.0);
    }

    #[test]
    fn constant_offset() {
        let a = ramp(16);
        let b = ImageGrid::new(16, 1.0, a.values().iter().map(|v| v + 0.1).collect()).unwrap();
        let q = quality_metrics(&a, &b, Peak::Fixed(1.0)).unwrap();
        assert!((q.rmse - 0.1).abs() < 1e-15);
        assert!((q.psnr_db - 20.0).abs() < 1e-12);
        assert!(q.ssim < 1.0);
        assert_eq!(psnr(0.01, 1.0), 20.0);
    }

    #[test]
    fn symmetric_with_fixed_peak() {
        let a = ramp(20);
        let b = ImageGrid::new(20, 1.0, a.values().iter().map(|v| v * v).collect()).unwrap();
        let ab = quality_metrics(&a, &b, Peak::Fixed(1.0)).unwrap();
        let ba = quality_metrics(&b, &a, Peak::Fixed(1.0)).unwrap();
        assert_eq!(ab.rmse, ba.rmse);
        assert!((ab.ssim - ba.ssim).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        let c = ImageGrid::filled(16, 1.0, 0.5).unwrap();
        assert!(matches!(quality_metrics(&c, &ramp(16), Peak::Fixed(1.0)), Err(Error::SsimUndefined(_))));
        assert!(matches!(quality_metrics(&ramp(16), &ramp(17), Peak::RefMax), Err(Error::Geometry(_))));
        assert!(matches!(ssim(&ramp(8), &ramp(8), 1.0), Err(Error::Shape(_))));
    }
}
