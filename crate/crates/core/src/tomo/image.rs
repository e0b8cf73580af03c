use crate::error::{ensure_finite, Error, Result};

/// Square scalar image. Pixel `(row, col)` sits at
/// `x = (col - (n-1)/2) * spacing`, `y = ((n-1)/2 - row) * spacing`, so row 0
/// is the top edge (+y) and storage is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    size_n: usize,
    spacing: f64,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(size_n: usize, spacing: f64, values: Vec<f64>) -> Result<Self> {
        if size_n == 0 {
            return Err(Error::Input("image size must be positive".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Input(format!("pixel spacing must be > 0, got {spacing}")));
        }
        if values.len() != size_n * size_n {
            return Err(Error::Shape(format!(
                "image of side {size_n} needs {} values, got {}",
                size_n * size_n,
                values.len()
            )));
        }
        Ok(Self { size_n, spacing, values })
    }

    pub fn zeros(size_n: usize, spacing: f64) -> Result<Self> {
        Self::new(size_n, spacing, vec![0.0; size_n * size_n])
    }

    pub fn filled(size_n: usize, spacing: f64, value: f64) -> Result<Self> {
        Self::new(size_n, spacing, vec![value; size_n * size_n])
    }

    pub fn size(&self) -> usize {
        self.size_n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
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

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size_n + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.size_n + col] = v;
    }

    /// Physical x of a column centre.
    pub fn x_of(&self, col: usize) -> f64 {
        (col as f64 - (self.size_n as f64 - 1.0) / 2.0) * self.spacing
    }

    /// Physical y of a row centre.
    pub fn y_of(&self, row: usize) -> f64 {
        ((self.size_n as f64 - 1.0) / 2.0 - row as f64) * self.spacing
    }

    /// Half the side length in physical units.
    pub fn half_width(&self) -> f64 {
        self.size_n as f64 * self.spacing / 2.0
    }

    pub fn check_finite(&self) -> Result<()> {
        ensure_finite(&self.values, "image")
    }

    /// Rotate by +90 degrees (counter-clockwise) about the grid centre.
    pub fn rotated_90(&self) -> ImageGrid {
        let n = self.size_n;
        let mut out = vec![0.0; n * n];
        // Destination (r, c) samples source (c, n-1-r), i.e. f(R^-1 p).
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = self.values[c * n + (n - 1 - r)];
            }
        }
        ImageGrid { size_n: n, spacing: self.spacing, values: out }
    }

    /// Nearest-neighbour resample onto an `out_size` grid covering the same
    /// physical extent.
    pub fn resample_nearest(&self, out_size: usize) -> Result<ImageGrid> {
        if out_size == 0 {
            return Err(Error::Input("resample size must be positive".into()));
        }
        let n = self.size_n;
        let scale = n as f64 / out_size as f64;
        let mut out = vec![0.0; out_size * out_size];
        for r in 0..out_size {
            let sr = (((r as f64 + 0.5) * scale).floor() as usize).min(n - 1);
            for c in 0..out_size {
                let sc = (((c as f64 + 0.5) * scale).floor() as usize).min(n - 1);
                out[r * out_size + c] = self.values[sr * n + sc];
            }
        }
        ImageGrid::new(out_size, self.spacing * scale, out)
    }

    pub fn dot(&self, other: &ImageGrid) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(ImageGrid::new(2, 1.0, vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(ImageGrid::new(2, 0.0, vec![0.0; 4]), Err(Error::Input(_))));
        assert!(matches!(ImageGrid::new(2, -1.0, vec![0.0; 4]), Err(Error::Input(_))));
    }

    #[test]
    fn coordinates_are_centred() {
        let g = ImageGrid::zeros(4, 2.0).unwrap();
        assert_eq!(g.x_of(0), -3.0);
        assert_eq!(g.x_of(3), 3.0);
        assert_eq!(g.y_of(0), 3.0);
        assert_eq!(g.y_of(3), -3.0);
    }

    #[test]
    fn four_quarter_turns_is_identity() {
        let vals: Vec<f64> = (0..9).map(|v| v as f64).collect();
        let g = ImageGrid::new(3, 1.0, vals).unwrap();
        let r = g.rotated_90();
        // top-right corner moves to top-left under a CCW quarter turn
        assert_eq!(r.get(0, 0), g.get(0, 2));
        assert_eq!(r.rotated_90().rotated_90().rotated_90(), g);
    }

    #[test]
    fn nearest_resample_keeps_extent() {
        let g = ImageGrid::new(2, 1.0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let up = g.resample_nearest(4).unwrap();
        assert_eq!(up.spacing(), 0.5);
        assert_eq!(up.get(0, 0), 1.0);
        assert_eq!(up.get(0, 3), 2.0);
        assert_eq!(up.get(3, 0), 3.0);
        assert_eq!(up.half_width(), g.half_width());
    }
}
