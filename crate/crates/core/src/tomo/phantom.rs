//! Synthetic test objects. All coordinates are normalised to the image
//! half-width, so `(-1, -1)..(1, 1)` spans the grid. Pixels are
//! area-averaged over a symmetric `SUPERSAMPLE x SUPERSAMPLE` lattice.

use super::ImageGrid;
use crate::error::{Error, Result};

const SUPERSAMPLE: usize = 4;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` in normalised coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Phantom {
    SheppLogan,
    Disk { cx: f64, cy: f64, radius: f64, intensity: f64 },
    Blocks(Vec<Rect>),
}

/// Ten-ellipse Shepp-Logan table with the higher-contrast intensities:
/// `(intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)`.
pub const SHEPP_LOGAN_MODIFIED: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0],
    [-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0],
    [-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0],
    [0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0],
    [0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0],
    [0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0],
    [0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0],
    [0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0],
    [0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0],
];

impl Phantom {
    fn validate(&self) -> Result<()> {
        match self {
            Phantom::SheppLogan => Ok(()),
            Phantom::Disk { cx, cy, radius, intensity } => {
                if ![*cx, *cy, *radius, *intensity].iter().all(|v| v.is_finite()) {
                    return Err(Error::Input("disk parameters must be finite".into()));
                }
                if *radius <= 0.0 {
                    return Err(Error::Input(format!("disk radius must be > 0, got {radius}")));
                }
                Ok(())
            }
            Phantom::Blocks(rects) => {
                for (i, r) in rects.iter().enumerate() {
                    if ![r.x0, r.y0, r.x1, r.y1, r.value].iter().all(|v| v.is_finite()) {
                        return Err(Error::Input(format!("block {i}: non-finite parameter")));
                    }
                    if r.x1 <= r.x0 || r.y1 <= r.y0 {
                        return Err(Error::Input(format!("block {i}: empty rectangle")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Point evaluation at normalised `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Phantom::SheppLogan => {
                let mut v = 0.0;
                for e in &SHEPP_LOGAN_MODIFIED {
                    let (amp, a, b, x0, y0, deg) = (e[0], e[1], e[2], e[3], e[4], e[5]);
                    let (s, c) = deg.to_radians().sin_cos();
                    let (dx, dy) = (x - x0, y - y0);
                    let u = dx * c + dy * s;
                    let w = -dx * s + dy * c;
                    if (u / a).powi(2) + (w / b).powi(2) <= 1.0 {
                        v += amp;
                    }
                }
                v
            }
            Phantom::Disk { cx, cy, radius, intensity } => {
                let (dx, dy) = (x - cx, y - cy);
                if dx * dx + dy * dy <= radius * radius {
                    *intensity
                } else {
                    0.0
                }
            }
            Phantom::Blocks(rects) => rects
                .iter()
                .filter(|r| x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1)
                .map(|r| r.value)
                .sum(),
        }
    }
}

/// Rasterise `kind` on a `size_n` grid of pixel spacing `spacing`.
pub fn make_phantom(kind: &Phantom, size_n: usize, spacing: f64) -> Result<ImageGrid> {
    if size_n < 16 {
        return Err(Error::Input(format!("phantom size must be >= 16, got {size_n}")));
    }
    kind.validate()?;
    let mut img = ImageGrid::zeros(size_n, spacing)?;
    let half = (size_n as f64) / 2.0;
    let ss = SUPERSAMPLE as f64;
    // Sub-pixel offsets symmetric about the pixel centre.
    let offs: Vec<f64> = (0..SUPERSAMPLE).map(|i| (i as f64 + 0.5) / ss - 0.5).collect();
    for r in 0..size_n {
        for c in 0..size_n {
            let xc = c as f64 - (size_n as f64 - 1.0) / 2.0;
            let yc = (size_n as f64 - 1.0) / 2.0 - r as f64;
            let mut acc = 0.0;
            for oy in &offs {
                for ox in &offs {
                    acc += kind.eval((xc + ox) / half, (yc + oy) / half);
                }
            }
            let v = acc / (ss * ss);
            // Overlapping negative ellipses can cancel to -1e-17.
            let v = if matches!(kind, Phantom::SheppLogan) { v.max(0.0) } else { v };
            img.set(r, c, v);
        }
    }
    Ok(img)
}
