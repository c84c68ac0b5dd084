use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reifcal_core::flatness::{beta_inf, flatness_record, theta};
use reifcal_core::geometry::{grassmann_distance, hausdorff_distance, project, Shape};
use reifcal_core::linalg::{dist, gram_schmidt};
use reifcal_core::{CalibrationField, ConstantKForm, OrientedPlane, PointCloud};

fn points(rng: &mut ChaCha8Rng, count: usize, n: usize) -> Vec<f64> {
    (0..count * n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Quadratic-time sup-inf distance.
fn brute_hausdorff(a: &[f64], b: &[f64], n: usize) -> f64 {
    let side = |p: &[f64], q: &[f64]| {
        p.chunks(n)
            .map(|x| q.chunks(n).map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    side(a, b).max(side(b, a))
}

fn random_plane(rng: &mut ChaCha8Rng, n: usize, k: usize) -> OrientedPlane {
    loop {
        let mut f = points(rng, k, n);
        if gram_schmidt(&mut f, n) {
            return OrientedPlane::new(points(rng, 1, n), f).unwrap();
        }
    }
}

/// Sine of the largest principal angle from the SVD of `UᵀV`.
fn principal_angle_oracle(p: &OrientedPlane, q: &OrientedPlane) -> f64 {
    let (n, k) = (p.n(), p.k());
    let u = DMatrix::from_column_slice(n, k, p.frame());
    let v = DMatrix::from_column_slice(n, k, q.frame());
    let s = (u.transpose() * v).singular_values();
    let cos_min = s.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
    (1.0 - cos_min * cos_min).max(0.0).sqrt()
}

#[test]
fn grassmann_matches_principal_angles() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (n, k) in [(3, 1), (3, 2), (4, 2), (7, 3), (8, 4)] {
        for _ in 0..100 {
            let p = random_plane(&mut rng, n, k);
            let q = random_plane(&mut rng, n, k);
            let d = grassmann_distance(&p, &q).unwrap();
            let o = principal_angle_oracle(&p, &q);
            assert!((d - o).abs() <= 1e-10, "n={n} k={k}: {d} vs {o}");
        }
    }
}

#[test]
fn grassmann_ignores_base_and_orientation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = random_plane(&mut rng, 5, 2);
    let q = p.flipped().with_base(vec![3.0; 5]);
    assert!(grassmann_distance(&p, &q).unwrap() <= 1e-12);
    let e1 = OrientedPlane::coordinate(3, &[0], vec![0.0; 3]).unwrap();
    let e2 = OrientedPlane::coordinate(3, &[1], vec![0.0; 3]).unwrap();
    assert!((grassmann_distance(&e1, &e2).unwrap() - 1.0).abs() <= 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn hausdorff_is_a_pseudometric(seed in any::<u64>(), na in 1usize..12, nb in 1usize..12, nc in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let (a, b, c) = (points(&mut rng, na, n), points(&mut rng, nb, n), points(&mut rng, nc, n));
        let d = |x: &[f64], y: &[f64]| hausdorff_distance(Shape::Points(x, n), Shape::Points(y, n)).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        prop_assert!((d(&a, &b) - brute_hausdorff(&a, &b, n)).abs() <= 1e-12);
        // a superset with repeated points is at distance zero from the set
        let mut dup = a.clone();
        dup.extend_from_slice(&a[..n]);
        prop_assert_eq!(d(&a, &dup), 0.0);
    }

    #[test]
    fn projection_is_one_lipschitz(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..n);
        let plane = random_plane(&mut rng, n, k);
        let x = points(&mut rng, 1, n);
        let y = points(&mut rng, 1, n);
        let (px, py) = (project(&plane, &x).unwrap(), project(&plane, &y).unwrap());
        prop_assert!(dist(&px, &py) <= dist(&x, &y) + 1e-12);
        let ppx = project(&plane, &px).unwrap();
        prop_assert!(dist(&ppx, &px) <= 1e-12);
        prop_assert!(plane.distance(&px) <= 1e-12);
        prop_assert!((plane.distance(&x) - dist(&x, &px)).abs() <= 1e-12);
    }
}

/// Noisy disk in R^3 around a random plane.
fn noisy_patch(seed: u64, count: usize, noise: f64) -> (PointCloud, OrientedPlane) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = random_plane(&mut rng, 3, 2);
    let plane = plane.with_base(vec![0.0; 3]);
    let normal = {
        let (a, b) = (plane.vector(0), plane.vector(1));
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    };
    let mut flat = Vec::new();
    while flat.len() < 3 * count {
        let u = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if u[0] * u[0] + u[1] * u[1] > 1.0 {
            continue;
        }
        let t = rng.random_range(-noise..=noise);
        let p = plane.point_at(&u);
        flat.extend((0..3).map(|i| p[i] + t * normal[i]));
    }
    (PointCloud::new(flat, 3, 2).unwrap(), plane)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn beta_never_exceeds_theta(seed in any::<u64>(), noise in 0.0f64..0.1) {
        let (cloud, _) = noisy_patch(seed, 300, noise);
        let field = CalibrationField::constant(ConstantKForm::coordinate_volume(3, 2).unwrap());
        let rec = flatness_record(&cloud, &[0.0; 3], 0.5, &field).unwrap();
        prop_assert!(rec.beta_inf <= rec.theta);
        prop_assert!(rec.beta_inf <= noise / 0.5 + 1e-9);
        prop_assert!(beta_inf(&cloud, &[0.0; 3], 0.5).unwrap() <= theta(&cloud, &[0.0; 3], 0.5).unwrap().0 + 1e-12);
    }

    #[test]
    fn theta_is_rigid_motion_invariant(seed in any::<u64>(), angle in 0.0f64..std::f64::consts::TAU, shift in -2.0f64..2.0) {
        let (cloud, _) = noisy_patch(seed, 200, 0.05);
        let (c, s) = (angle.cos(), angle.sin());
        let moved = cloud
            .map_points(|p| vec![c * p[0] - s * p[2] + shift, p[1] - shift, s * p[0] + c * p[2] + 0.5 * shift])
            .unwrap();
        let (t0, _) = theta(&cloud, &[0.0; 3], 0.6).unwrap();
        let (t1, _) = theta(&moved, &[shift, -shift, 0.5 * shift], 0.6).unwrap();
        prop_assert!((t0 - t1).abs() <= 1e-6, "{} vs {}", t0, t1);
    }
}

#[test]
fn fits_are_deterministic() {
    let (cloud, _) = noisy_patch(9, 400, 0.03);
    let field = CalibrationField::constant(ConstantKForm::coordinate_volume(3, 2).unwrap());
    let a = flatness_record(&cloud, &[0.1, 0.0, 0.0], 0.4, &field).unwrap();
    let b = flatness_record(&cloud, &[0.1, 0.0, 0.0], 0.4, &field).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exact_plane_has_zero_beta() {
    let (cloud, plane) = noisy_patch(10, 500, 0.0);
    assert!(beta_inf(&cloud, &[0.0; 3], 0.7).unwrap() <= 1e-9);
    let (_, fitted) = theta(&cloud, &[0.0; 3], 0.7).unwrap();
    assert!(grassmann_distance(&fitted, &plane).unwrap() <= 1e-6);
}
