//! Dynamic multi-mask augmentation in sinogram space.
//!
//! Random disjoint rectangular blocks are drawn on the image grid, each is
//! forward-projected, the projections are summed and normalised into
//! `[0, 1]`, and a sinogram is split into its mask-weighted (positive) and
//! complement-weighted (negative) parts.

use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{ensure_finite, Error, Result};
use crate::rng;
use crate::tomo::{radon_forward, ImageGrid, ProjectionGeometry, Sinogram};

/// Axis-aligned block; `(x0, y0)` is the top-left pixel as (column, row).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskBlock {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl MaskBlock {
    pub fn overlaps(&self, other: &MaskBlock) -> bool {
        self.x0 < other.x0 + other.w
            && other.x0 < self.x0 + self.w
            && self.y0 < other.y0 + other.h
            && other.y0 < self.y0 + self.h
    }

    pub fn fits(&self, grid_n: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x0 + self.w <= grid_n && self.y0 + self.h <= grid_n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub grid_n: usize,
    pub blocks: Vec<MaskBlock>,
    pub seed: u64,
    pub overlap_allowed: bool,
}

impl MaskSet {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.blocks.iter().enumerate() {
            if !b.fits(self.grid_n) {
                return Err(Error::Input(format!("block {i} {b:?} leaves the {} grid", self.grid_n)));
            }
        }
        if !self.overlap_allowed {
            for (i, a) in self.blocks.iter().enumerate() {
                if let Some(j) = self.blocks[i + 1..].iter().position(|b| a.overlaps(b)) {
                    return Err(Error::Input(format!("blocks {i} and {} overlap", i + 1 + j)));
                }
            }
        }
        Ok(())
    }

    /// Binary image of one block (1 inside, 0 outside).
    pub fn rasterize_block(&self, index: usize, spacing: f64) -> Result<ImageGrid> {
        let b = self.blocks[index];
        let mut img = ImageGrid::zeros(self.grid_n, spacing)?;
        for r in b.y0..b.y0 + b.h {
            for c in b.x0..b.x0 + b.w {
                img.set(r, c, 1.0);
            }
        }
        Ok(img)
    }

    /// Indicator of the union of all blocks.
    pub fn rasterize_union(&self, spacing: f64) -> Result<ImageGrid> {
        let mut img = ImageGrid::zeros(self.grid_n, spacing)?;
        for b in &self.blocks {
            for r in b.y0..b.y0 + b.h {
                for c in b.x0..b.x0 + b.w {
                    img.set(r, c, 1.0);
                }
            }
        }
        Ok(img)
    }
}

/// Inclusive range of block extents; a fixed size has `min == max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeRange {
    pub min: usize,
    pub max: usize,
}

impl SizeRange {
    pub fn fixed(v: usize) -> Self {
        Self { min: v, max: v }
    }

    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min == 0 || max < min {
            return Err(Error::Input(format!("invalid block size range {min}..={max}")));
        }
        Ok(Self { min, max })
    }
}

/// Placement parameters for [`sample_mask_blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSampler {
    pub grid_n: usize,
    pub k: usize,
    pub block_w: SizeRange,
    pub block_h: SizeRange,
    /// Rejection attempts allowed per block.
    pub max_attempts: usize,
    pub overlap_allowed: bool,
}

impl MaskSampler {
    pub fn new(grid_n: usize, k: usize, block_w: usize, block_h: usize) -> Self {
        Self {
            grid_n,
            k,
            block_w: SizeRange::fixed(block_w),
            block_h: SizeRange::fixed(block_h),
            max_attempts: 1000,
            overlap_allowed: false,
        }
    }

    pub fn sample(&self, seed: u64) -> Result<MaskSet> {
        let n = self.grid_n;
        if self.block_w.min == 0 || self.block_h.min == 0 {
            return Err(Error::Input("block extents must be positive".into()));
        }
        if self.block_w.max > n || self.block_h.max > n {
            return Err(Error::Input(format!("block larger than the {n} grid")));
        }
        if self.k * self.block_w.min * self.block_h.min > n * n {
            return Err(Error::Placement(format!(
                "{} blocks of {}x{} cannot fit in a {n}x{n} grid",
                self.k, self.block_w.min, self.block_h.min
            )));
        }
        if self.max_attempts == 0 {
            return Err(Error::Input("max_attempts must be positive".into()));
        }
        let mut r = rng::stream(seed, 0);
        let mut blocks: Vec<MaskBlock> = Vec::with_capacity(self.k);
        for i in 0..self.k {
            let mut placed = false;
            for _ in 0..self.max_attempts {
                let w = r.random_range(self.block_w.min..=self.block_w.max);
                let h = r.random_range(self.block_h.min..=self.block_h.max);
                let cand = MaskBlock {
                    x0: r.random_range(0..=n - w),
                    y0: r.random_range(0..=n - h),
                    w,
                    h,
                };
                if self.overlap_allowed || blocks.iter().all(|b| !b.overlaps(&cand)) {
                    blocks.push(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Placement(format!(
                    "could not place block {} of {} within {} attempts",
                    i + 1,
                    self.k,
                    self.max_attempts
                )));
            }
        }
        Ok(MaskSet { grid_n: n, blocks, seed, overlap_allowed: self.overlap_allowed })
    }
}

/// `k` disjoint `block_w x block_h` blocks by seeded rejection sampling.
pub fn sample_mask_blocks(
    grid_n: usize,
    k: usize,
    block_w: usize,
    block_h: usize,
    seed: u64,
    max_attempts: usize,
) -> Result<MaskSet> {
    MaskSampler { max_attempts, ..MaskSampler::new(grid_n, k, block_w, block_h) }.sample(seed)
}

/// Sinogram-space mask. `zero_mask` records a degenerate linear
/// normalisation (all-zero input left unchanged).
#[derive(Debug, Clone, PartialEq)]
pub struct SinogramMask {
    pub sino: Sinogram,
    pub zero_mask: bool,
}

impl SinogramMask {
    pub fn new(sino: Sinogram) -> Self {
        Self { sino, zero_mask: false }
    }

    pub fn values(&self) -> &[f64] {
        self.sino.values()
    }

    pub fn is_normalized(&self) -> bool {
        self.values().iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn max(&self) -> f64 {
        self.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Project each block separately and sum the sinograms.
pub fn project_masks(
    masks: &MaskSet,
    spacing: f64,
    geom: &Arc<ProjectionGeometry>,
) -> Result<SinogramMask> {
    masks.validate()?;
    let parts: Vec<Sinogram> = (0..masks.k())
        .into_par_iter()
        .map(|i| radon_forward(&masks.rasterize_block(i, spacing)?, geom))
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; geom.n_det() * geom.n_angles()];
    for p in &parts {
        for (acc, v) in sum.iter_mut().zip(p.values()) {
            *acc += v;
        }
    }
    if parts.is_empty() {
        // still enforce that the grid fits the detector
        radon_forward(&ImageGrid::zeros(masks.grid_n, spacing)?, geom)?;
    }
    Ok(SinogramMask::new(Sinogram::new(geom.clone(), sum)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    /// Divide by the global maximum.
    Linear,
    /// Clamp into `[0, 1]`.
    #[default]
    Clip,
}

pub fn normalize_mask(m: &SinogramMask, mode: NormMode) -> Result<SinogramMask> {
    ensure_finite(m.values(), "sinogram mask")?;
    match mode {
        NormMode::Clip => {
            let v = m.values().iter().map(|v| v.clamp(0.0, 1.0)).collect();
            Ok(SinogramMask { sino: m.sino.with_values(v)?, zero_mask: m.zero_mask })
        }
        NormMode::Linear => {
            let max = m.max();
            if max > 0.0 {
                let v = m.values().iter().map(|v| v / max).collect();
                Ok(SinogramMask { sino: m.sino.with_values(v)?, zero_mask: false })
            } else {
                Ok(SinogramMask { sino: m.sino.clone(), zero_mask: true })
            }
        }
    }
}

/// `[C_pos, S_full, C_neg]`; `c_pos + c_neg == s_full` holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub c_pos: Sinogram,
    pub s_full: Sinogram,
    pub c_neg: Sinogram,
}

/// Split `s` into `(m s, (1 - m) s)` so the parts add back to `s` exactly:
/// the larger part is the rounded product, the smaller one is the exact
/// (Sterbenz) remainder.
#[inline]
pub fn complementary_split(m: f64, s: f64) -> (f64, f64) {
    if m >= 0.5 {
        let pos = m * s;
        (pos, s - pos)
    } else {
        let neg = (1.0 - m) * s;
        (s - neg, neg)
    }
}

fn check_mask_shape(s: &Sinogram, m: &SinogramMask) -> Result<()> {
    if s.values().len() != m.values().len() || !s.same_geometry(&m.sino) {
        return Err(Error::Geometry("mask and sinogram shapes differ".into()));
    }
    Ok(())
}

pub fn decompose_pos_neg(s: &Sinogram, m: &SinogramMask) -> Result<AugmentedSample> {
    check_mask_shape(s, m)?;
    if let Some(i) = m.values().iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Input(format!(
            "mask value {} at index {i} outside [0, 1]; normalise first",
            m.values()[i]
        )));
    }
    let (pos, neg): (Vec<f64>, Vec<f64>) = m
        .values()
        .iter()
        .zip(s.values())
        .map(|(&mv, &sv)| complementary_split(mv, sv))
        .unzip();
    Ok(AugmentedSample {
        c_pos: s.with_values(pos)?,
        s_full: s.clone(),
        c_neg: s.with_values(neg)?,
    })
}

/// `||C_pos - M S||^2 + ||C_neg - (1 - M) S||^2`, summed, not averaged.
pub fn pn_consistency_loss(sample: &AugmentedSample, m: &SinogramMask) -> Result<f64> {
    check_mask_shape(&sample.s_full, m)?;
    sample.c_pos.check_same(&sample.s_full, "c_pos")?;
    sample.c_neg.check_same(&sample.s_full, "c_neg")?;
    let mut loss = 0.0;
    for (((&mv, &s), &p), &n) in m
        .values()
        .iter()
        .zip(sample.s_full.values())
        .zip(sample.c_pos.values())
        .zip(sample.c_neg.values())
    {
        let (ep, en) = complementary_split(mv, s);
        loss += (p - ep).powi(2) + (n - en).powi(2);
    }
    Ok(loss)
}

/// Count of distinct mask layouts. Exact for `k = 1`; for `k > 1` a
/// lower-bound estimate `C(P, k) * (1 - k w h / n^2)^k`, floored and
/// saturated at `u128::MAX`.
pub fn mask_config_count(grid_n: usize, block_w: usize, block_h: usize, k: usize) -> Result<u128> {
    if block_w == 0 || block_h == 0 || block_w > grid_n || block_h > grid_n || k == 0 {
        return Err(Error::Input(format!(
            "invalid mask layout: grid {grid_n}, block {block_w}x{block_h}, k {k}"
        )));
    }
    let p = ((grid_n - block_w + 1) * (grid_n - block_h + 1)) as u128;
    if k == 1 {
        return Ok(p);
    }
    if k as u128 > p {
        return Ok(0);
    }
    let mut log_binom = 0.0f64;
    for i in 0..k {
        log_binom += ((p - i as u128) as f64).ln() - ((i + 1) as f64).ln();
    }
    let fill = (k * block_w * block_h) as f64 / (grid_n * grid_n) as f64;
    if fill >= 1.0 {
        return Ok(0);
    }
    let log_total = log_binom + k as f64 * (1.0 - fill).ln();
    if log_total >= (u128::MAX as f64).ln() {
        return Ok(u128::MAX);
    }
    Ok(log_total.exp().floor() as u128)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(n: usize, angles: usize) -> Arc<ProjectionGeometry> {
        Arc::new(ProjectionGeometry::for_image(n, 1.0, angles).unwrap())
    }

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn zero_blocks_is_empty() {
        let m = sample_mask_blocks(256, 0, 64, 64, 1, 1000).unwrap();
        assert!(m.blocks.is_empty());
    }

    #[test]
    fn three_blocks_are_disjoint_and_in_bounds() {
        let m = sample_mask_blocks(256, 3, 64, 64, 42, 1000).unwrap();
        assert_eq!(m.k(), 3);
        m.validate().unwrap();
        for (i, a) in m.blocks.iter().enumerate() {
            assert!(a.fits(256));
            for b in &m.blocks[i + 1..] {
                assert!(!a.overlaps(b));
            }
        }
    }

    #[test]
    fn same_seed_same_blocks() {
        let a = sample_mask_blocks(128, 4, 20, 30, 9, 1000).unwrap();
        let b = sample_mask_blocks(128, 4, 20, 30, 9, 1000).unwrap();
        let c = sample_mask_blocks(128, 4, 20, 30, 10, 1000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.blocks, c.blocks);
    }

    #[test]
    fn impossible_layouts_fail_loudly() {
        assert!(matches!(sample_mask_blocks(64, 5, 32, 32, 1, 1000), Err(Error::Placement(_))));
        // four 32x32 blocks fit only as an exact tiling; rejection sampling gives up
        assert!(matches!(sample_mask_blocks(64, 4, 32, 32, 1, 50), Err(Error::Placement(_))));
    }

    #[test]
    fn size_ranges_are_respected() {
        let s = MaskSampler {
            block_w: SizeRange::new(8, 16).unwrap(),
            block_h: SizeRange::new(4, 6).unwrap(),
            ..MaskSampler::new(64, 6, 8, 4)
        };
        let m = s.sample(3).unwrap();
        assert!(m.blocks.iter().all(|b| (8..=16).contains(&b.w) && (4..=6).contains(&b.h)));
        m.validate().unwrap();
    }

    #[test]
    fn empty_set_projects_to_zero() {
        let g = geom(32, 10);
        let m = sample_mask_blocks(32, 0, 4, 4, 1, 10).unwrap();
        let p = project_masks(&m, 1.0, &g).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_block_equals_projection_of_ones() {
        let g = geom(32, 10);
        let m = MaskSet {
            grid_n: 32,
            blocks: vec![MaskBlock { x0: 0, y0: 0, w: 32, h: 32 }],
            seed: 0,
            overlap_allowed: false,
        };
        let p = project_masks(&m, 1.0, &g).unwrap();
        let ones = radon_forward(&ImageGrid::filled(32, 1.0, 1.0).unwrap(), &g).unwrap();
        assert_eq!(p.values(), ones.values());
    }

    #[test]
    fn disjoint_blocks_project_additively() {
        let g = geom(48, 21);
        let m = sample_mask_blocks(48, 2, 10, 14, 5, 1000).unwrap();
        let p = project_masks(&m, 1.0, &g).unwrap();
        let union = radon_forward(&m.rasterize_union(1.0).unwrap(), &g).unwrap();
        assert!(rel(p.values(), union.values()) <= 1e-10);
    }

    #[test]
    fn normalisation_modes() {
        let g = Arc::new(ProjectionGeometry::uniform(2, 2, 1.0).unwrap());
        let m = SinogramMask::new(Sinogram::new(g.clone(), vec![5.0, 1.7, 0.4, 0.0]).unwrap());
        let lin = normalize_mask(&m, NormMode::Linear).unwrap();
        assert_eq!(lin.max(), 1.0);
        let clip = normalize_mask(&m, NormMode::Clip).unwrap();
        assert_eq!(clip.values(), &[1.0, 1.0, 0.4, 0.0]);
        let zero = SinogramMask::new(Sinogram::zeros(g));
        let z = normalize_mask(&zero, NormMode::Linear).unwrap();
        assert!(z.zero_mask);
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decomposition_extremes() {
        let g = Arc::new(ProjectionGeometry::uniform(3, 2, 1.0).unwrap());
        let s = Sinogram::new(g.clone(), vec![1.0, -2.0, 3.5, 0.25, 7.0, 9.0]).unwrap();
        let zero = SinogramMask::new(Sinogram::zeros(g.clone()));
        let one = SinogramMask::new(Sinogram::new(g.clone(), vec![1.0; 6]).unwrap());
        let a = decompose_pos_neg(&s, &zero).unwrap();
        assert!(a.c_pos.values().iter().all(|&v| v == 0.0));
        assert_eq!(a.c_neg, s);
        let b = decompose_pos_neg(&s, &one).unwrap();
        assert_eq!(b.c_pos, s);
        assert!(b.c_neg.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decomposition_rejects_unnormalised_or_mismatched_masks() {
        let g = Arc::new(ProjectionGeometry::uniform(3, 2, 1.0).unwrap());
        let s = Sinogram::new(g.clone(), vec![1.0; 6]).unwrap();
        let big = SinogramMask::new(Sinogram::new(g, vec![1.5; 6]).unwrap());
        assert!(matches!(decompose_pos_neg(&s, &big), Err(Error::Input(_))));
        let other = Arc::new(ProjectionGeometry::uniform(2, 3, 1.0).unwrap());
        let wrong = SinogramMask::new(Sinogram::zeros(other));
        assert!(matches!(decompose_pos_neg(&s, &wrong), Err(Error::Geometry(_))));
    }

    #[test]
    fn loss_is_quadratic_in_a_perturbation() {
        let g = Arc::new(ProjectionGeometry::uniform(4, 3, 1.0).unwrap());
        let s = Sinogram::new(g.clone(), (0..12).map(|i| i as f64 * 0.7 - 2.0).collect()).unwrap();
        let m = SinogramMask::new(
            Sinogram::new(g, (0..12).map(|i| (i as f64 / 11.0).powi(2)).collect()).unwrap(),
        );
        let mut sample = decompose_pos_neg(&s, &m).unwrap();
        assert_eq!(pn_consistency_loss(&sample, &m).unwrap(), 0.0);
        let delta = 0.125;
        sample.c_pos.values_mut()[5] += delta;
        let loss = pn_consistency_loss(&sample, &m).unwrap();
        assert!((loss - delta * delta).abs() <= 1e-12 * delta * delta);
    }

    #[test]
    fn config_counts() {
        assert_eq!(mask_config_count(256, 64, 64, 1).unwrap(), 37_249);
        assert!(mask_config_count(256, 64, 64, 2).unwrap() >= 200_000);
        assert_eq!(mask_config_count(64, 64, 64, 1).unwrap(), 1);
        assert!(mask_config_count(64, 65, 64, 1).is_err());
    }
}
