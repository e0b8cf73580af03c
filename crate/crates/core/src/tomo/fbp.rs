use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};

use super::{backproject, ImageGrid, ProjectionGeometry, Sinogram};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FbpWindow {
    #[default]
    RamLak,
    Hann,
}

/// Frequency response of the band-limited ramp for a `len`-point padded
/// projection. Built as the DFT of the sampled spatial ramp kernel
/// (`1/(4d^2)` at 0, `-1/(pi k d)^2` at odd `k`) so the DC term is not
/// zeroed by sampling; its magnitude follows `|nu|` up to Nyquist.
fn ramp_response(len: usize, det_spacing: f64, window: FbpWindow) -> Vec<f64> {
    let d = det_spacing;
    let mut h: Vec<Complex64> = (0..len)
        .map(|i| {
            let k = i.min(len - i);
            let v = if k == 0 {
                1.0 / (4.0 * d * d)
            } else if k % 2 == 1 {
                -1.0 / (PI * k as f64 * d).powi(2)
            } else {
                0.0
            };
            Complex64::new(v * d, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut h);
    h.iter()
        .enumerate()
        .map(|(i, c)| {
            let nu = i.min(len - i) as f64 / len as f64;
            let w = match window {
                FbpWindow::RamLak => 1.0,
                FbpWindow::Hann => 0.5 * (1.0 + (2.0 * PI * nu).cos()),
            };
            c.re * w
        })
        .collect()
}

/// Ramp-filter every projection (zero-padded to twice the next power of
/// two), then backproject with weight `pi / n_angles`.
pub fn fbp_reconstruct(
    sino: &Sinogram,
    geom: &Arc<ProjectionGeometry>,
    out_size: usize,
    spacing: f64,
    window: FbpWindow,
) -> Result<ImageGrid> {
    let na = geom.n_angles();
    if na < 2 {
        return Err(Error::InsufficientData(format!("FBP needs >= 2 angles, got {na}")));
    }
    if **sino.geometry() != **geom {
        return Err(Error::Geometry("sinogram does not match the requested geometry".into()));
    }
    let nd = geom.n_det();
    let len = 2 * nd.next_power_of_two();
    let response = ramp_response(len, geom.det_spacing(), window);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let sv = sino.values();

    let filtered_cols: Vec<Vec<f64>> = (0..na)
        .into_par_iter()
        .map(|a| {
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            for k in 0..nd {
                buf[k].re = sv[k * na + a];
            }
            fwd.process(&mut buf);
            for (b, h) in buf.iter_mut().zip(&response) {
                *b *= *h;
            }
            inv.process(&mut buf);
            buf[..nd].iter().map(|c| c.re / len as f64).collect()
        })
        .collect();

    let mut filtered = vec![0.0; nd * na];
    for (a, col) in filtered_cols.iter().enumerate() {
        for (k, v) in col.iter().enumerate() {
            filtered[k * na + a] = *v;
        }
    }
    let filtered = Sinogram::new(geom.clone(), filtered)?;
    let mut img = backproject(&filtered, geom, out_size, spacing)?;
    // The adjoint carries pixel area over bin width; strip it to get plain
    // interpolated backprojection before the angular quadrature weight.
    let scale = PI / na as f64 * geom.det_spacing() / (spacing * spacing);
    img.values_mut().iter_mut().for_each(|v| *v *= scale);
    Ok(img)
}
