use std::sync::Arc;

use super::{backproject, radon_forward, ImageGrid, ProjectionGeometry, Sinogram};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MlemResult {
    pub image: ImageGrid,
    /// Poisson log-likelihood `sum(y ln yhat - yhat)` of each iterate,
    /// starting with the all-ones initial image.
    pub loglik: Vec<f64>,
}

/// Neumaier-compensated sum; the log-likelihood trace is compared at 1e-9
/// absolute slack, which plain summation cannot hold at 1e6 magnitudes.
fn compensated_sum(it: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn poisson_loglik(y: &[f64], yhat: &[f64], floor: f64) -> f64 {
    compensated_sum(y.iter().zip(yhat).map(|(&yi, &p)| {
        let p = p.max(floor);
        if yi > 0.0 {
            yi * p.ln() - p
        } else {
            -p
        }
    }))
}

/// Multiplicative EM: `x <- x / sens * A^T (y / max(A x, floor))` with
/// `sens = A^T 1`, starting from all ones. `eps_floor` is absolute; pass
/// `None` for the default `1e-12 * max(y)`.
pub fn mlem_reconstruct(
    sino: &Sinogram,
    geom: &Arc<ProjectionGeometry>,
    out_size: usize,
    spacing: f64,
    iters: usize,
    eps_floor: Option<f64>,
) -> Result<MlemResult> {
    if iters == 0 {
        return Err(Error::Input("MLEM needs at least one iteration".into()));
    }
    let y = sino.values();
    if let Some(i) = y.iter().position(|&v| v < 0.0) {
        return Err(Error::Input(format!("negative sinogram entry {} at index {i}", y[i])));
    }
    let ymax = y.iter().cloned().fold(0.0, f64::max);
    let floor = match eps_floor {
        Some(f) if f > 0.0 && f.is_finite() => f,
        Some(f) => return Err(Error::Input(format!("eps_floor must be > 0, got {f}"))),
        None => (1e-12 * ymax).max(f64::MIN_POSITIVE),
    };

    let ones = Sinogram::new(geom.clone(), vec![1.0; y.len()])?;
    let sens = backproject(&ones, geom, out_size, spacing)?;
    let mut x = ImageGrid::filled(out_size, spacing, 1.0)?;
    let mut proj = radon_forward(&x, geom)?;
    let mut loglik = vec![poisson_loglik(y, proj.values(), floor)];

    for _ in 0..iters {
        let ratio: Vec<f64> = y
            .iter()
            .zip(proj.values())
            .map(|(&yi, &p)| yi / p.max(floor))
            .collect();
        let back = backproject(&sino.with_values(ratio)?, geom, out_size, spacing)?;
        for ((xv, &b), &s) in x.values_mut().iter_mut().zip(back.values()).zip(sens.values()) {
            *xv = if s > 0.0 { *xv * b / s } else { 0.0 };
        }
        proj = radon_forward(&x, geom)?;
        loglik.push(poisson_loglik(y, proj.values(), floor));
    }
    Ok(MlemResult { image: x, loglik })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomo::{make_phantom, Phantom};

    fn disk_setup(n: usize, angles: usize) -> (Arc<ProjectionGeometry>, Sinogram) {
        let g = Arc::new(ProjectionGeometry::for_image(n, 1.0, angles).unwrap());
        let disk = Phantom::Disk { cx: 0.1, cy: -0.05, radius: 0.45, intensity: 1.0 };
        let s = radon_forward(&make_phantom(&disk, n, 1.0).unwrap(), &g).unwrap();
        (g, s)
    }

    #[test]
    fn rejects_negative_data_and_zero_iterations() {
        let (g, s) = disk_setup(16, 8);
        assert!(matches!(mlem_reconstruct(&s, &g, 16, 1.0, 0, None), Err(Error::Input(_))));
        let mut neg = s.clone();
        neg.values_mut()[3] = -1.0;
        assert!(matches!(mlem_reconstruct(&neg, &g, 16, 1.0, 1, None), Err(Error::Input(_))));
    }

    #[test]
    fn iterates_stay_nonnegative_and_loglik_is_monotone() {
        let (g, s) = disk_setup(32, 30);
        let res = mlem_reconstruct(&s, &g, 32, 1.0, 20, None).unwrap();
        assert!(res.image.values().iter().all(|&v| v >= 0.0));
        assert_eq!(res.loglik.len(), 21);
        for w in res.loglik.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn projected_counts_are_preserved() {
        let (g, s) = disk_setup(32, 30);
        let res = mlem_reconstruct(&s, &g, 32, 1.0, 10, None).unwrap();
        let total: f64 = s.values().iter().sum();
        let est: f64 = radon_forward(&res.image, &g).unwrap().values().iter().sum();
        assert!(((est - total) / total).abs() < 5e-3);
    }

    #[test]
    fn compensated_sum_beats_naive_cancellation() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v.iter().cloned()), 2.0);
    }
}
