use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector, Rotation2};
use nsg_core::clarke::catalog::*;
use nsg_core::clarke::*;
use nsg_core::geometry::UnitVector;
use proptest::prelude::*;

fn pt(c: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(c)
}

/// Three affine pieces through the origin at 120 degrees, turned by `phase`.
fn fan(phase: f64) -> Vec<DVector<f64>> {
    (0..3).map(|k| {
        let a = phase + 2.0 * PI * k as f64 / 3.0;
        pt(&[a.cos(), a.sin()])
    }).collect()
}

fn distinct(samples: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for s in samples {
        if !out.iter().any(|o| (o - s).norm() < 1e-9) {
            out.push(s.clone());
        }
    }
    out
}

#[test]
fn example_intervals_and_classification() {
    let f = max_square_line();
    let cfg = SamplingConfig::scaled(0.1, 0);
    for (x, lo, hi) in [(-1.0, -2.0, 1.0), (2.0, 1.0, 4.0)] {
        let gg = sample_generalized_gradient(&f, &pt(&[x]), &cfg).unwrap();
        let inner = GeneralizedGradient { samples: gg.innermost(), ..gg.clone() };
        let (a, b) = inner.bounding_box()[0];
        assert!((a - lo).abs() <= 0.02 && (b - hi).abs() <= 0.02, "x = {x}: [{a}, {b}]");
    }
    let tol = default_critical_tol(f.lip_bound());
    for x in [-1.5, -1.0, 0.0, 2.0, 2.5] {
        let gg = sample_generalized_gradient(&f, &pt(&[x]), &cfg).unwrap();
        assert_eq!(is_critical(&gg, tol).unwrap().critical, x == -1.0, "x = {x}");
    }
}

#[test]
fn abs_sum_map_cone_delta() {
    let gd = sample_generalized_differential(&abs_sum_map(), &pt(&[0.0, 0.0]), &SamplingConfig::scaled(0.1, 3)).unwrap();
    let c = cone_certificate(&gd, &UnitVector::basis(2, 0)).unwrap();
    assert_abs_diff_eq!(c.delta, 2.0, epsilon = 1e-9);
}

#[test]
fn abs_sum_map_determinant_oracle() {
    // Every element of the generalized differential is [[s, 1], [2, t]] with
    // s, t in [-1, 1]; |det| = |s t - 2| >= 1 on the whole family.
    let n = 200;
    let mut min_det = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=n {
            let (s, t) = (-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64);
            min_det = min_det.min((s * t - 2.0).abs());
        }
    }
    assert_abs_diff_eq!(min_det, 1.0, epsilon = 1e-12);
    let gd = sample_generalized_differential(&abs_sum_map(), &pt(&[0.0, 0.0]), &SamplingConfig::scaled(0.1, 0)).unwrap();
    for a in &gd.samples {
        assert!(a.determinant().abs() >= 1.0 - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaling_equivariance(c in 0.1f64..20.0, x in -3.0f64..3.0, seed in 0u64..1000) {
        let base = max_square_line();
        let scaled = FnFunction::new(1, c * base.lip_bound(),
            move |y| c * max_square_line().eval(y),
            move |y| max_square_line().gradient_ae(y).map(|g| g * c));
        let cfg = SamplingConfig::scaled(0.1, seed);
        let a = sample_generalized_gradient(&base, &pt(&[x]), &cfg).unwrap();
        let b = sample_generalized_gradient(&scaled, &pt(&[x]), &cfg).unwrap();
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            prop_assert!((sa * c - sb).norm() <= 1e-12 * c.max(1.0) * sa.norm().max(1.0));
        }
        let ca = is_critical(&a, default_critical_tol(base.lip_bound())).unwrap();
        let cb = is_critical(&b, default_critical_tol(scaled.lip_bound())).unwrap();
        prop_assert_eq!(ca.critical, cb.critical);
    }

    #[test]
    fn rotation_equivariance(theta in 0.0f64..(2.0 * PI), phase in 0.0f64..1.0, seed in 0u64..1000) {
        let pieces = Arc::new(fan(phase));
        let r = Rotation2::new(theta).into_inner();
        let rot = DMatrix::from_column_slice(2, 2, r.as_slice());
        let f = max_linear(pieces.to_vec());
        let (p2, rot2, rot3) = (pieces.clone(), rot.clone(), rot.clone());
        let composed = FnFunction::new(2, 1.0,
            move |y| max_linear(p2.to_vec()).eval(&(&rot2 * y)),
            move |y| max_linear(pieces.to_vec()).gradient_ae(&(&rot3 * y)).map(|g| rot3.transpose() * g));
        let cfg = SamplingConfig::scaled(0.1, seed);
        let x = pt(&[0.0, 0.0]);
        let lhs = distinct(&sample_generalized_gradient(&composed, &x, &cfg).unwrap().samples);
        let rhs: Vec<DVector<f64>> = distinct(&sample_generalized_gradient(&f, &(&rot * &x), &cfg).unwrap().samples)
            .iter().map(|g| rot.transpose() * g).collect();
        prop_assert_eq!(lhs.len(), rhs.len());
        for g in &lhs {
            prop_assert!(rhs.iter().any(|h| (g - h).norm() <= 1e-9));
        }
    }

    #[test]
    fn adding_samples_never_increases_the_margin(x in -2.5f64..2.5, keep in 1usize..192, seed in 0u64..1000) {
        let gg = sample_generalized_gradient(&max_square_line(), &pt(&[x]), &SamplingConfig::scaled(0.1, seed)).unwrap();
        let partial = GeneralizedGradient { samples: gg.samples[..keep].to_vec(), ..gg.clone() };
        let full = is_critical(&gg, 1e-3).unwrap().margin;
        prop_assert!(full <= is_critical(&partial, 1e-3).unwrap().margin + 1e-9);
    }
}
