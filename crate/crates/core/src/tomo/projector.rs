//! Pixel-driven discrete Radon transform.
//!
//! `R[f](s_k, theta_a) = sum_ij f_ij * K(s_k - x_i cos theta_a - y_j sin theta_a) * h^2`
//! with `h` the pixel spacing and `K` the geometry's unit-integral kernel.
//! The backprojector visits exactly the same (pixel, angle, bin, weight)
//! tuples, so it is the matrix transpose of the forward operator.

use std::sync::Arc;

use rayon::prelude::*;

use super::{ImageGrid, ProjectionGeometry, Sinogram};
use crate::error::{Error, Result};

#[inline]
fn pixel_offset(x: f64, y: f64, cos_sin: (f64, f64)) -> f64 {
    x * cos_sin.0 + y * cos_sin.1
}

pub fn radon_forward(img: &ImageGrid, geom: &Arc<ProjectionGeometry>) -> Result<Sinogram> {
    img.check_finite()?;
    geom.check_image(img.size(), img.spacing())?;
    let n = img.size();
    let area = img.spacing() * img.spacing();
    let xs: Vec<f64> = (0..n).map(|c| img.x_of(c)).collect();
    let ys: Vec<f64> = (0..n).map(|r| img.y_of(r)).collect();
    let vals = img.values();

    let columns: Vec<Vec<f64>> = (0..geom.n_angles())
        .into_par_iter()
        .map(|a| {
            let cs = geom.cos_sin(a);
            let mut col = vec![0.0; geom.n_det()];
            for (r, &y) in ys.iter().enumerate() {
                let row = &vals[r * n..(r + 1) * n];
                for (&v, &x) in row.iter().zip(&xs) {
                    if v == 0.0 {
                        continue;
                    }
                    let contrib = v * area;
                    geom.for_each_bin(pixel_offset(x, y, cs), |k, w| col[k] += contrib * w);
                }
            }
            col
        })
        .collect();

    let na = geom.n_angles();
    let mut out = vec![0.0; geom.n_det() * na];
    for (a, col) in columns.iter().enumerate() {
        for (k, v) in col.iter().enumerate() {
            out[k * na + a] = *v;
        }
    }
    Sinogram::new(geom.clone(), out)
}

/// Exact adjoint of [`radon_forward`] onto an `out_size` grid of pixel
/// spacing `spacing`.
pub fn backproject(
    sino: &Sinogram,
    geom: &Arc<ProjectionGeometry>,
    out_size: usize,
    spacing: f64,
) -> Result<ImageGrid> {
    if **sino.geometry() != **geom {
        return Err(Error::Geometry("sinogram does not match the requested geometry".into()));
    }
    let mut img = ImageGrid::zeros(out_size, spacing)?;
    geom.check_image(out_size, spacing)?;
    let area = spacing * spacing;
    let na = geom.n_angles();
    let sv = sino.values();
    let xs: Vec<f64> = (0..out_size).map(|c| img.x_of(c)).collect();
    let ys: Vec<f64> = (0..out_size).map(|r| img.y_of(r)).collect();

    img.values_mut()
        .par_chunks_mut(out_size)
        .zip(ys.par_iter())
        .for_each(|(row, &y)| {
            for (px, &x) in row.iter_mut().zip(&xs) {
                let mut acc = 0.0;
                for a in 0..na {
                    let cs = geom.cos_sin(a);
                    geom.for_each_bin(pixel_offset(x, y, cs), |k, w| acc += w * sv[k * na + a]);
                }
                *px = acc * area;
            }
        });
    Ok(img)
}
