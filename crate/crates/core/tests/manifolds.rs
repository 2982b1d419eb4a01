use nalgebra::DVector;
use nsg_core::geometry::item_rng;
use nsg_core::manifolds::*;
use nsg_core::sphere_maps::{SphereFamily, SphereMap};
use proptest::prelude::*;
use rand::Rng;

fn torus_point<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0))
}

#[test]
fn walking_minimal_directions_reaches_p() {
    let mut rng = item_rng(23, 0);
    for man in [ModelManifold::Sphere(2), ModelManifold::Sphere(3), ModelManifold::FlatTorus(2), ModelManifold::FlatTorus(3), ModelManifold::Euclidean(3)] {
        for _ in 0..1000 {
            let (p, x) = match man {
                ModelManifold::Sphere(n) => {
                    let pts = sphere_random_points(n, 2, rng.random());
                    (pts[0].clone(), pts[1].clone())
                }
                ModelManifold::FlatTorus(n) => (torus_point(n, &mut rng), torus_point(n, &mut rng)),
                ModelManifold::Euclidean(n) => (torus_point(n, &mut rng) * 4.0, torus_point(n, &mut rng) * 4.0),
            };
            let d = man.distance(&p, &x);
            for dir in man.minimal_directions(&p, &x).unwrap() {
                let end = man.exp(&x, &(dir * d));
                assert!(man.distance(&end, &p) <= 1e-7, "{man:?}");
            }
        }
    }
}

#[test]
fn torus_ties_produce_every_minimal_lift() {
    // x = p + (1/2, 1/2) is reached along four diagonal directions.
    let man = ModelManifold::FlatTorus(2);
    let p = DVector::from_column_slice(&[0.1, 0.3]);
    let x = DVector::from_column_slice(&[0.6, 0.8]);
    let dirs = man.minimal_directions(&p, &x).unwrap();
    assert_eq!(dirs.len(), 4);
    let d = man.distance(&p, &x);
    assert!((d - 0.5f64.sqrt()).abs() < 1e-12);
    for dir in dirs {
        assert!(man.distance(&man.exp(&x, &(dir * d)), &p) <= 1e-12);
    }
}

#[test]
fn trichotomy_matches_distances() {
    let man = ModelManifold::Sphere(2);
    let p = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
    let q = DVector::from_column_slice(&[0.6, 0.0, -0.8]);
    let tol = 1e-3;
    for x in sphere_polar_grid(64, 64) {
        let (dp, dq) = (man.distance(&p, &x), man.distance(&q, &x));
        let expected = if (dp - dq).abs() <= tol { Side::Bisector } else if dp < dq { Side::NearP } else { Side::NearQ };
        assert_eq!(classify(&man, &p, &q, &x, tol), expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sphere_scan_is_rotation_invariant(seed in 0u64..10_000) {
        let man = ModelManifold::Sphere(2);
        let SphereFamily::Rotation(q) = SphereMap::random_rotation(3, seed).unwrap().family else { unreachable!() };
        let p = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
        let grid = sphere_polar_grid(24, 24);
        let tol = 1e-3;
        let rotate = |v: &DVector<f64>| -> DVector<f64> { let w: DVector<f64> = &q * v; &w / w.norm() };
        let base: Vec<DVector<f64>> = crit_scan(&man, &p, &grid, tol).unwrap().into_iter().map(|r| r.point).collect();
        let rgrid: Vec<DVector<f64>> = grid.iter().map(rotate).collect();
        let turned: Vec<DVector<f64>> = crit_scan(&man, &rotate(&p), &rgrid, tol).unwrap().into_iter().map(|r| r.point).collect();
        prop_assert_eq!(base.len(), turned.len());
        for (a, b) in base.iter().zip(&turned) {
            prop_assert!((rotate(a) - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn distance_is_symmetric_and_bounded(seed in 0u64..10_000) {
        let mut rng = item_rng(seed, 0);
        let man = ModelManifold::FlatTorus(3);
        let (a, b, c) = (torus_point(3, &mut rng), torus_point(3, &mut rng), torus_point(3, &mut rng));
        prop_assert!((man.distance(&a, &b) - man.distance(&b, &a)).abs() <= 1e-15);
        prop_assert!(man.distance(&a, &c) <= man.distance(&a, &b) + man.distance(&b, &c) + 1e-12);
        prop_assert!(man.distance(&a, &b) <= 0.75f64.sqrt() + 1e-12);
        let s = ModelManifold::Sphere(3);
        let pts = sphere_random_points(3, 2, seed);
        let SphereFamily::Rotation(m) = SphereMap::random_rotation(4, seed).unwrap().family else { unreachable!() };
        let turn = |v: &DVector<f64>| -> DVector<f64> { let w: DVector<f64> = &m * v; &w / w.norm() };
        prop_assert!((s.distance(&pts[0], &pts[1]) - s.distance(&turn(&pts[0]), &turn(&pts[1]))).abs() <= 1e-12);
    }
}
