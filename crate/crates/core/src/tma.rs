//! Transparent medical attention: threshold a coarse reconstruction into a
//! binary ROI, project the ROI into sinogram space, and gate sinogram
//! features with it. No trainable state anywhere.

use std::sync::Arc;

use crate::augment::{normalize_mask, NormMode, SinogramMask};
use crate::error::{Error, Result};
use crate::tomo::{
    fbp_reconstruct, mlem_reconstruct, radon_forward, FbpWindow, ImageGrid, ProjectionGeometry,
    Sinogram,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Recon {
    Fbp(FbpWindow),
    Mlem { iters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    /// Percentile in `(0, 100)` of the pixel values, linearly interpolated
    /// between order statistics.
    Percentile(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TmaConfig {
    pub recon: Recon,
    pub recon_size: usize,
    pub threshold: Threshold,
    /// Optional hypometabolic threshold: pixels strictly below it are added
    /// to the ROI. Off by default.
    pub lower_threshold: Option<Threshold>,
    pub binarize_projection: bool,
}

impl Default for TmaConfig {
    fn default() -> Self {
        Self {
            recon: Recon::Fbp(FbpWindow::RamLak),
            recon_size: 64,
            threshold: Threshold::Percentile(90.0),
            lower_threshold: None,
            binarize_projection: true,
        }
    }
}

impl TmaConfig {
    pub fn validate(&self) -> Result<()> {
        for t in std::iter::once(&self.threshold).chain(self.lower_threshold.as_ref()) {
            match *t {
                Threshold::Percentile(p) if !(p > 0.0 && p < 100.0) => {
                    return Err(Error::Input(format!("percentile must be in (0, 100), got {p}")))
                }
                Threshold::Absolute(v) if !v.is_finite() => {
                    return Err(Error::Input("absolute threshold must be finite".into()))
                }
                _ => {}
            }
        }
        if self.recon_size == 0 {
            return Err(Error::Input("recon_size must be positive".into()));
        }
        if let Recon::Mlem { iters: 0 } = self.recon {
            return Err(Error::Input("MLEM needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Binary image mask (values exactly 0 or 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RoiImageMask(ImageGrid);

impl RoiImageMask {
    /// Accepts any image whose values are all 0 or 1; used for
    /// clinician-supplied masks.
    pub fn from_binary(img: ImageGrid) -> Result<Self> {
        if let Some(i) = img.values().iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Input(format!("ROI mask value {} at {i} is not binary", img.values()[i])));
        }
        Ok(Self(img))
    }

    /// Binarise by `value > 0`.
    pub fn from_nonzero(img: &ImageGrid) -> Result<Self> {
        let v = img.values().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        Ok(Self(ImageGrid::new(img.size(), img.spacing(), v)?))
    }

    pub fn image(&self) -> &ImageGrid {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.values().iter().filter(|&&v| v == 1.0).count()
    }
}

/// Sinogram-space ROI weights in `[0, 1]`.
pub type RoiSinoMask = SinogramMask;

pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Input("percentile of an empty set".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn resolve(t: Threshold, values: &[f64]) -> Result<f64> {
    match t {
        Threshold::Absolute(v) => Ok(v),
        Threshold::Percentile(p) => percentile(values, p),
    }
}

/// `1` where the reconstruction is strictly above the threshold (or
/// strictly below the optional lower threshold), `0` elsewhere.
pub fn extract_roi_mask(recon_img: &ImageGrid, cfg: &TmaConfig) -> Result<RoiImageMask> {
    cfg.validate()?;
    recon_img.check_finite()?;
    let vals = recon_img.values();
    let upper = resolve(cfg.threshold, vals)?;
    let lower = cfg.lower_threshold.map(|t| resolve(t, vals)).transpose()?;
    let mask = vals
        .iter()
        .map(|&v| {
            let hit = v > upper || lower.is_some_and(|lo| v < lo);
            if hit { 1.0 } else { 0.0 }
        })
        .collect();
    Ok(RoiImageMask(ImageGrid::new(recon_img.size(), recon_img.spacing(), mask)?))
}

/// Project the ROI (nearest-upsampled to `grid_n` over the same extent)
/// and either binarise (`> 0`) or clip into `[0, 1]`.
pub fn project_roi(
    mask: &RoiImageMask,
    geom: &Arc<ProjectionGeometry>,
    grid_n: usize,
    binarize: bool,
) -> Result<RoiSinoMask> {
    let img = if mask.0.size() == grid_n {
        mask.0.clone()
    } else {
        mask.0.resample_nearest(grid_n)?
    };
    let proj = radon_forward(&img, geom)?;
    if binarize {
        let v = proj.values().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        Ok(SinogramMask::new(proj.with_values(v)?))
    } else {
        normalize_mask(&SinogramMask::new(proj), NormMode::Clip)
    }
}

/// `O = roi * feat`, elementwise.
pub fn apply_attention(feat: &Sinogram, roi: &RoiSinoMask) -> Result<Sinogram> {
    if feat.values().len() != roi.values().len() || !feat.same_geometry(&roi.sino) {
        return Err(Error::Geometry("attention mask and feature shapes differ".into()));
    }
    let v = feat.values().iter().zip(roi.values()).map(|(f, r)| r * f).collect();
    feat.with_values(v)
}

#[derive(Debug, Clone)]
pub struct TmaOutput {
    pub recon: ImageGrid,
    pub roi_image: RoiImageMask,
    pub roi_sino: RoiSinoMask,
    pub gated: Sinogram,
}

/// Full chain on a measured sinogram of a `grid_n` image with pixel
/// `spacing`. `roi_override` replaces the thresholded mask (clinician ROI).
pub fn run_tma(
    sino: &Sinogram,
    grid_n: usize,
    spacing: f64,
    cfg: &TmaConfig,
    roi_override: Option<RoiImageMask>,
) -> Result<TmaOutput> {
    cfg.validate()?;
    let geom = sino.geometry().clone();
    let coarse_spacing = spacing * grid_n as f64 / cfg.recon_size as f64;
    let recon = match cfg.recon {
        Recon::Fbp(w) => fbp_reconstruct(sino, &geom, cfg.recon_size, coarse_spacing, w)?,
        Recon::Mlem { iters } => {
            // MLEM requires y >= 0.
            let y = sino.with_values(sino.values().iter().map(|v| v.max(0.0)).collect())?;
            mlem_reconstruct(&y, &geom, cfg.recon_size, coarse_spacing, iters, None)?.image
        }
    };
    let roi_image = match roi_override {
        Some(m) => m,
        None => extract_roi_mask(&recon, cfg)?,
    };
    let roi_sino = project_roi(&roi_image, &geom, grid_n, cfg.binarize_projection)?;
    let gated = apply_attention(sino, &roi_sino)?;
    Ok(TmaOutput { recon, roi_image, roi_sino, gated })
}
