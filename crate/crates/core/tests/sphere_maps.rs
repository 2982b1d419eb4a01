use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use nalgebra::DVector;
use nsg_core::geometry::{item_rng, GeodesicSegment, UnitVector};
use nsg_core::sphere_maps::*;
use proptest::prelude::*;

fn families() -> Vec<(&'static str, SphereMap)> {
    vec![
        ("identity", SphereMap::identity(3).unwrap()),
        ("rotation", SphereMap::random_rotation(3, 11).unwrap()),
        ("twist 0.01", SphereMap::latitude_twist(3, Profile::Linear, 0.01).unwrap()),
        ("twist 0.05", SphereMap::latitude_twist(3, Profile::Linear, 0.05).unwrap()),
        ("twist 0.1", SphereMap::latitude_twist(3, Profile::Linear, 0.1).unwrap()),
    ]
}

/// `Lip^b` of the linear twist: at the equator `d sigma` is the shear
/// `[[1, a], [0, 1]]` in (azimuth, height) coordinates, whose larger singular
/// value `(a + sqrt(a^2 + 4)) / 2` dominates everywhere else.
fn shear_lip(a: f64) -> f64 {
    (a + (a * a + 4.0).sqrt()) / 2.0
}

#[test]
fn gronwall_chain_and_identity_hold_on_256_geodesics() {
    for (name, sigma) in families() {
        for i in 0..256 {
            let cs = curve_samples(&sigma, &sampled_geodesic(3, 5, i), DEFAULT_STEP, DerivativeMode::Analytic).unwrap();
            let g = gronwall_check(&cs);
            assert!(g.holds, "{name} geodesic {i}: {} > {}", g.max_lhs, g.rhs);
            assert!(g.chain.holds, "{name} geodesic {i}: {:?}", g.chain);
            assert!(cs.identity_residual() <= 1e-6, "{name}: {}", cs.identity_residual());
        }
    }
}

#[test]
fn curve_samples_invariants() {
    let sigma = SphereMap::latitude_twist(3, Profile::Sine, 0.3).unwrap();
    for mode in [DerivativeMode::Analytic, DerivativeMode::FiniteDifference] {
        let cs = curve_samples(&sigma, &sampled_geodesic(3, 2, 0), DEFAULT_STEP, mode).unwrap();
        assert!(cs.c.iter().all(|c| (c.norm() - 1.0).abs() <= 1e-10));
        assert_abs_diff_eq!(cs.cbar[0], cs.c[0], epsilon = 1e-8);
        assert_abs_diff_eq!(cs.cbar_dot[0], cs.c_dot[0], epsilon = 1e-8);
        assert_eq!(cs.t.len(), 513);
        assert_abs_diff_eq!(*cs.t.last().unwrap(), PI, epsilon = 1e-12);
    }
}

#[test]
fn finite_difference_residual_is_within_5h2() {
    let h = DEFAULT_STEP;
    let sigma = SphereMap::normalized_perturbation(3, TangentField::random_linear(3, 4), 0.1).unwrap();
    assert_eq!(sigma.default_mode(), DerivativeMode::FiniteDifference);
    for i in 0..32 {
        let cs = curve_samples(&sigma, &sampled_geodesic(3, 8, i), h, DerivativeMode::FiniteDifference).unwrap();
        assert!(cs.identity_residual() <= 5.0 * h * h, "{}", cs.identity_residual());
        assert!(gronwall_check(&cs).holds);
    }
}

#[test]
fn gronwall_slack_shrinks_with_amplitude() {
    let slack = |a: f64| {
        let sigma = SphereMap::latitude_twist(3, Profile::Linear, a).unwrap();
        (0..32)
            .map(|i| {
                let cs = curve_samples(&sigma, &sampled_geodesic(3, 1, i), DEFAULT_STEP, DerivativeMode::Analytic).unwrap();
                let g = gronwall_check(&cs);
                g.rhs - g.max_lhs
            })
            .fold(0.0, f64::max)
    };
    let s: Vec<f64> = [0.1, 0.01, 0.001, 0.0].iter().map(|a| slack(*a)).collect();
    assert!(s.windows(2).all(|w| w[1] < w[0]), "{s:?}");
    // First order in the amplitude, vanishing for the identity.
    assert!((s[1] / s[2] - 10.0).abs() < 0.5, "{s:?}");
    assert!(s[3] <= 1e-12, "{s:?}");
}

#[test]
fn speed_bound_on_every_instance() {
    for (name, sigma) in families() {
        for i in 0..64 {
            let cs = curve_samples(&sigma, &sampled_geodesic(3, 3, i), DEFAULT_STEP, DerivativeMode::Analytic).unwrap();
            let alpha = PI.exp() * alpha_integral(&cs);
            assert!((cs.c_dot[0].norm() - 1.0).abs() <= alpha + 1e-9, "{name} {i}");
        }
    }
}

#[test]
fn condition_report_examples() {
    let rep = check_conditions(&SphereMap::identity(3).unwrap(), 256, 0, DEFAULT_STEP).unwrap();
    assert!(rep.all_satisfied());
    let k = (2f64.sqrt() - 1.0) / (2.0 * (PI.exp() - 1.0));
    assert_abs_diff_eq!(rep.entry("1.5b").unwrap().margin, k * k, epsilon = 1e-12);
    assert_abs_diff_eq!(k * k, 8.750e-5, epsilon = 5e-8);
    assert!(rep.identity_residual <= 1e-12 && rep.alpha_implied);

    for n in [2, 8] {
        let rep = check_conditions(&SphereMap::random_rotation(n, 3).unwrap(), 64, 0, DEFAULT_STEP).unwrap();
        let exact = (8.0 / PI * (n as f64 - 1.0)).powf(-0.5);
        assert_abs_diff_eq!(rep.entry("1.6").unwrap().margin, exact, epsilon = 1e-9);
    }

    let rep = check_conditions(&SphereMap::latitude_twist(3, Profile::Linear, 0.5).unwrap(), 64, 0, DEFAULT_STEP).unwrap();
    assert!(!rep.entry("1.5a").unwrap().satisfied);
    assert!(rep.entry("1.7").unwrap().satisfied);
    assert_abs_diff_eq!(rep.lip_b, shear_lip(0.5), epsilon = 1e-9);
}

#[test]
fn worst_geodesics_reproduce_their_margins() {
    let sigma = SphereMap::latitude_twist(3, Profile::Sine, 0.4).unwrap();
    let rep = check_conditions(&sigma, 64, 9, DEFAULT_STEP).unwrap();
    let b = rep.entry("1.5b").unwrap();
    let cs = curve_samples(&sigma, &b.worst_geodesic, DEFAULT_STEP, DerivativeMode::Analytic).unwrap();
    assert_abs_diff_eq!(rep.lip_b.powi(-2) + rep.k * rep.k - cs.max_acceleration_sq(), b.margin, epsilon = 1e-6);
    let a = rep.entry("1.7").unwrap();
    assert_abs_diff_eq!(comparison_angle_margin(&sigma, &a.worst_geodesic, DEFAULT_STEP).unwrap(), a.margin, epsilon = 1e-6);
    // The Lip^b witness runs along the direction of extreme stretch.
    let w = &rep.entry("1.5a").unwrap().worst_geodesic;
    let stretch = sigma.differential(w.base.as_vector(), w.tangent.as_vector()).norm();
    assert_abs_diff_eq!(stretch.max(1.0 / stretch), rep.lip_b, epsilon = 1e-9);
}

#[test]
fn curvature_conditions_imply_alpha_condition() {
    for (_, sigma) in families() {
        let rep = check_conditions(&sigma, 64, 4, DEFAULT_STEP).unwrap();
        assert!(rep.alpha_implied);
        let curvature = rep.entry("1.5a").unwrap().satisfied && rep.entry("1.5b").unwrap().satisfied;
        if curvature {
            assert!(rep.max_alpha_integral <= alpha_threshold() + 1e-9);
        }
    }
}

#[test]
fn bilip_matches_the_shear_oracle() {
    let mut last = 1.0;
    for a in [0.01, 0.05, 0.1] {
        let sigma = SphereMap::latitude_twist(3, Profile::Linear, a).unwrap();
        let l1 = bilip_estimate(&sigma, 100_000, 1, true).unwrap();
        let l2 = bilip_estimate(&sigma, 100_000, 2, true).unwrap();
        assert!((l1 - l2).abs() <= 1e-3);
        assert_abs_diff_eq!(l1, shear_lip(a), epsilon = 1e-9);
        assert!(l1 > last);
        last = l1;
        // Pair sampling alone approaches the oracle from below.
        let pairs_only = bilip_estimate(&sigma, 100_000, 1, false).unwrap();
        assert!(pairs_only <= shear_lip(a) + 1e-12 && pairs_only > 1.0 + 0.9 * (shear_lip(a) - 1.0));
    }
}

#[test]
fn extension_margin_matches_comparison_inner_products() {
    for (name, sigma) in families() {
        let m = extension_nonsingularity_margin(&sigma, 64, 200, 6).unwrap();
        let direct = (0..64)
            .map(|i| curve_samples(&sigma, &sampled_geodesic(3, 6, i), DEFAULT_STEP, sigma.default_mode()).unwrap().min_comparison_inner())
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(m.margin, direct, epsilon = 1e-6);
        assert!(m.margin > 0.0, "{name}");
    }
}

#[test]
fn small_alpha_certifies_the_origin() {
    for a in [0.001, 0.005, 0.01] {
        let sigma = SphereMap::latitude_twist(3, Profile::Linear, a).unwrap();
        let alpha = (0..256)
            .map(|i| alpha_integral(&curve_samples(&sigma, &sampled_geodesic(3, 0, i), DEFAULT_STEP, DerivativeMode::Analytic).unwrap()))
            .fold(0.0, f64::max);
        assert!(alpha <= alpha_threshold(), "a = {a}: {alpha}");
        assert!(extension_nonsingularity_margin(&sigma, 256, 0, 0).unwrap().margin > 0.0);
    }
}

#[test]
fn large_twist_loses_the_certificate() {
    let crossing = obtuse_twist_amplitude(3, Profile::Linear, 0.5, 4.0, 16, 64, 0).unwrap();
    assert!(crossing > 1.0 && crossing < 2.0, "{crossing}");
    let sigma = SphereMap::latitude_twist(3, Profile::Linear, 2.0).unwrap();
    assert!(extension_nonsingularity_margin(&sigma, 256, 0, 0).unwrap().margin <= 0.0);
    let rep = check_conditions(&sigma, 64, 0, DEFAULT_STEP).unwrap();
    assert!(!rep.entry("1.7").unwrap().satisfied);
    // Still a diffeomorphism: the certificate is lost, not the map.
    assert!(sigma.diffeomorphism_margin(2000, 0) > 0.1);
    assert!(obtuse_twist_amplitude(3, Profile::Linear, 0.1, 0.5, 4, 16, 0).is_err());
}

#[test]
fn extension_sandwich_for_each_family() {
    let mut fams = families();
    fams.push(("perturbation", SphereMap::normalized_perturbation(3, TangentField::random_linear(3, 4), 0.1).unwrap()));
    for (name, sigma) in fams {
        let lip = bilip_estimate(&sigma, 100_000, 0, true).unwrap();
        let r = extension_bilip_check(&sigma, lip, 100_000, 1).unwrap();
        assert!(r.holds, "{name}: {r:?}");
        assert!(r.worst_upper <= r.lip_b + 1e-6 && r.worst_lower >= 1.0 / r.lip_b - 1e-6);
    }
}

#[test]
fn inner_product_deviation_bound() {
    for a in [0.05, 0.3, 1.0] {
        let sigma = SphereMap::latitude_twist(3, Profile::Sine, a).unwrap();
        let lip = bilip_estimate(&sigma, 20_000, 0, true).unwrap();
        assert!(inner_product_deviation_slack(&sigma, lip, 20_000, 1).unwrap() >= -1e-12);
    }
}

#[test]
fn twist_commutes_with_rotation_about_the_axis() {
    // Symmetry reduction specific to the latitude twist: rotating a geodesic
    // about the height axis rotates its curve, so curvature data agree.
    let sigma = SphereMap::latitude_twist(3, Profile::Cubic, 0.7).unwrap();
    let g = sampled_geodesic(3, 12, 0);
    let rot = |v: &DVector<f64>| {
        let (s, c) = 0.9f64.sin_cos();
        DVector::from_column_slice(&[c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]])
    };
    let g2 = GeodesicSegment::half_circle(UnitVector::new(rot(g.base.as_vector())).unwrap(), UnitVector::new(rot(g.tangent.as_vector())).unwrap()).unwrap();
    let a = curve_samples(&sigma, &g, DEFAULT_STEP, DerivativeMode::Analytic).unwrap();
    let b = curve_samples(&sigma, &g2, DEFAULT_STEP, DerivativeMode::Analytic).unwrap();
    for j in 0..a.t.len() {
        assert_abs_diff_eq!(rot(&a.c_ddot[j]), b.c_ddot[j], epsilon = 1e-12);
    }
}

#[test]
fn twist_cap_check() {
    for a in [0.5, 1.5] {
        assert!(SphereMap::latitude_twist(3, Profile::Sine, a).unwrap().diffeomorphism_margin(2000, 1) > 0.1);
    }
    assert!(SphereMap::latitude_twist(2, Profile::Linear, 0.1).is_err());
}

fn unit(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-4)
        .prop_map(|v| DVector::from_vec(v).normalize())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eval_is_unit_and_differential_tangent(x in unit(4), w in unit(4), a in -1.5f64..1.5) {
        let sigma = SphereMap::latitude_twist(4, Profile::Sine, a).unwrap();
        let y = sigma.eval(&x);
        prop_assert!((y.norm() - 1.0).abs() <= 1e-12);
        prop_assert!(sigma.differential(&x, &w).dot(&y).abs() <= 1e-8);
    }

    #[test]
    fn radial_homogeneity(x in unit(3), r in 0.01f64..5.0, lambda in 0.01f64..10.0, seed in 0u64..50) {
        let sigma = SphereMap::normalized_perturbation(3, TangentField::random_linear(3, seed), 0.2).unwrap();
        let v = &x * r;
        let lhs = radial_extension_eval(&sigma, &(&v * lambda));
        let rhs = radial_extension_eval(&sigma, &v) * lambda;
        prop_assert!((lhs - rhs).norm() <= 1e-12 * lambda * r);
    }

    #[test]
    fn a_v_consistency(v in unit(3), u in unit(3), a in -1.0f64..1.0) {
        let sigma = SphereMap::latitude_twist(3, Profile::Linear, a).unwrap();
        let vu = UnitVector::new(v.clone()).unwrap();
        let m = a_v_matrix(&sigma, &vu);
        prop_assert!((&m * &v - sigma.eval(&v)).norm() <= 1e-10);
        let w = &u - &v * v.dot(&u);
        prop_assert!((&m * &w).dot(&sigma.eval(&v)).abs() <= 1e-8);
    }

    #[test]
    fn rotation_invariance_of_conditions(seed in 0u64..1000) {
        // Precomposing with a rotation permutes geodesics but leaves curvature unchanged.
        let q = SphereMap::random_rotation(3, seed).unwrap();
        let mut rng = item_rng(seed, 1);
        let g = GeodesicSegment::random(3, &mut rng);
        let cs = curve_samples(&q, &g, DEFAULT_STEP, DerivativeMode::Analytic).unwrap();
        prop_assert!(alpha_integral(&cs).abs() <= 1e-8);
        prop_assert!(cs.max_comparison_angle() <= 1e-7);
    }
}
