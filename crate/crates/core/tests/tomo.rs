use std::sync::Arc;

use projdiff::tomo::*;

/// Exact line integral of one uniform ellipse (normalised coordinates
/// scaled by `half`) at detector offset `s` and angle `theta`.
fn ellipse_projection(e: &[f64; 6], half: f64, s: f64, theta: f64) -> f64 {
    let (amp, a, b, x0, y0, deg) = (e[0], e[1] * half, e[2] * half, e[3] * half, e[4] * half, e[5]);
    let t = theta - deg.to_radians();
    let a2 = (a * t.cos()).powi(2) + (b * t.sin()).powi(2);
    let sp = s - (x0 * theta.cos() + y0 * theta.sin());
    if sp * sp >= a2 {
        0.0
    } else {
        2.0 * amp * a * b / a2 * (a2 - sp * sp).sqrt()
    }
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn shepp_logan_projection_matches_analytic_ellipse_integrals() {
    let n = 128;
    let img = make_phantom(&Phantom::SheppLogan, n, 1.0).unwrap();
    let g = Arc::new(ProjectionGeometry::for_image(n, 1.0, 90).unwrap());
    let sino = radon_forward(&img, &g).unwrap();
    let half = n as f64 / 2.0;
    let mut exact = vec![0.0; sino.values().len()];
    for k in 0..g.n_det() {
        for (a, &th) in g.angles().iter().enumerate() {
            exact[k * g.n_angles() + a] = SHEPP_LOGAN_MODIFIED
                .iter()
                .map(|e| ellipse_projection(e, half, g.bin_center(k), th))
                .sum();
        }
    }
    let err = rel_l2(sino.values(), &exact);
    assert!(err < 0.03, "relative L2 error {err}");
}

#[test]
fn off_centre_disk_projection_follows_its_centre() {
    let n = 96;
    let (cx, cy, r) = (0.3, -0.2, 0.25);
    let img = make_phantom(&Phantom::Disk { cx, cy, radius: r, intensity: 2.0 }, n, 0.5).unwrap();
    let g = Arc::new(ProjectionGeometry::for_image(n, 0.5, 60).unwrap());
    let sino = radon_forward(&img, &g).unwrap();
    let half = img.half_width();
    let disk = [2.0, r, r, cx, cy, 0.0];
    let mut exact = vec![0.0; sino.values().len()];
    for k in 0..g.n_det() {
        for (a, &th) in g.angles().iter().enumerate() {
            exact[k * g.n_angles() + a] = ellipse_projection(&disk, half, g.bin_center(k), th);
        }
    }
    let err = rel_l2(sino.values(), &exact);
    // A mirrored centre would put the error near 1.
    assert!(err < 0.05, "relative L2 error {err}");
}

#[test]
fn quarter_turn_shifts_the_sinogram_by_half_the_angles() {
    let n = 40;
    let na = 36;
    let mut img = make_phantom(&Phantom::SheppLogan, n, 1.0).unwrap();
    img.values_mut()[5 * n + 7] += 3.0;
    let g = Arc::new(ProjectionGeometry::for_image(n, 1.0, na).unwrap());
    let s = radon_forward(&img, &g).unwrap();
    let r = radon_forward(&img.rotated_90(), &g).unwrap();
    let nd = g.n_det();
    let scale = s.values().iter().cloned().fold(0.0, f64::max);
    for k in 0..nd {
        for a in 0..na {
            // R[rot f](s, theta) = R[f](s, theta - pi/2), wrapping with s -> -s.
            let want = if a >= na / 2 { s.get(k, a - na / 2) } else { s.get(nd - 1 - k, a + na / 2) };
            assert!((r.get(k, a) - want).abs() <= 1e-12 * scale, "bin {k} angle {a}");
        }
    }
}

#[test]
fn linearity_on_random_pairs() {
    use rand::Rng;
    let n = 32;
    let g = Arc::new(ProjectionGeometry::for_image(n, 1.0, 45).unwrap());
    let mut rng = projdiff::rng::stream(3, 0);
    for _ in 0..5 {
        let f1 = ImageGrid::new(n, 1.0, (0..n * n).map(|_| rng.random()).collect()).unwrap();
        let f2 = ImageGrid::new(n, 1.0, (0..n * n).map(|_| rng.random()).collect()).unwrap();
        let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let comb = ImageGrid::new(n, 1.0, f1.values().iter().zip(f2.values()).map(|(x, y)| a * x + b * y).collect())
            .unwrap();
        let lhs = radon_forward(&comb, &g).unwrap();
        let (r1, r2) = (radon_forward(&f1, &g).unwrap(), radon_forward(&f2, &g).unwrap());
        let rhs: Vec<f64> = r1.values().iter().zip(r2.values()).map(|(x, y)| a * x + b * y).collect();
        assert!(rel_l2(lhs.values(), &rhs) <= 1e-10);
    }
}

#[test]
fn mlem_preserves_counts_on_a_disk() {
    let n = 48;
    let g = Arc::new(ProjectionGeometry::for_image(n, 1.0, 60).unwrap());
    let img = make_phantom(&Phantom::Disk { cx: 0.0, cy: 0.0, radius: 0.5, intensity: 1.0 }, n, 1.0).unwrap();
    let y = radon_forward(&img, &g).unwrap();
    let res = mlem_reconstruct(&y, &g, n, 1.0, 50, None).unwrap();
    assert!(res.image.values().iter().all(|&v| v >= 0.0));
    assert!(res.loglik.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    let total: f64 = radon_forward(&res.image, &g).unwrap().values().iter().sum();
    let target: f64 = y.values().iter().sum();
    assert!((total - target).abs() <= 0.005 * target);
}

#[test]
fn shepp_logan_range() {
    let img = make_phantom(&Phantom::SheppLogan, 256, 1.0).unwrap();
    let (lo, hi) = img.values().iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(lo >= 0.0 && hi <= 1.05);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nonnegative_images_project_nonnegative(vals in prop::collection::vec(0.0f64..5.0, 16 * 16)) {
            let g = Arc::new(ProjectionGeometry::for_image(16, 1.0, 12).unwrap());
            let s = radon_forward(&ImageGrid::new(16, 1.0, vals).unwrap(), &g).unwrap();
            prop_assert!(s.values().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn adjoint_identity_holds(
            f in prop::collection::vec(-1.0f64..1.0, 16 * 16),
            seed in any::<u64>(),
        ) {
            let g = Arc::new(ProjectionGeometry::for_image(16, 0.7, 10).unwrap());
            let img = ImageGrid::new(16, 0.7, f).unwrap();
            let y = projdiff::rng::normal_vec(&mut projdiff::rng::stream(seed, 0), g.n_det() * 10);
            let ys = Sinogram::new(g.clone(), y).unwrap();
            let lhs = radon_forward(&img, &g).unwrap().dot(&ys);
            let rhs = img.dot(&backproject(&ys, &g, 16, 0.7).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }

        #[test]
        fn projection_mass_is_image_mass(vals in prop::collection::vec(0.0f64..1.0, 20 * 20)) {
            // Each angle carries the image integral (kernel has unit mass).
            let g = Arc::new(ProjectionGeometry::for_image(20, 1.0, 8).unwrap());
            let img = ImageGrid::new(20, 1.0, vals).unwrap();
            let mass: f64 = img.values().iter().sum();
            let s = radon_forward(&img, &g).unwrap();
            for a in 0..8 {
                let col: f64 = (0..g.n_det()).map(|k| s.get(k, a)).sum::<f64>() * g.det_spacing();
                prop_assert!((col - mass).abs() <= 1e-9 * mass.max(1.0));
            }
        }
    }
}
