//! The radial extension `F(v) = |v| sigma(v / |v|)` and its differentials
//! `A_v` at the origin.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::{bilip_estimate, grid_steps, sampled_geodesic, SphereMap, DEFAULT_STEP};
use crate::error::{domain, Result};
use crate::geometry::{complement_basis, hull_matrix_sample, item_rng, min_singular_value, UnitVector};

pub fn radial_extension_eval(sigma: &SphereMap, v: &DVector<f64>) -> DVector<f64> {
    let r = v.norm();
    if r == 0.0 {
        return DVector::zeros(v.len());
    }
    sigma.eval(&(v / r)) * r
}

/// `A_v = sigma(v) v^T + sum_j d sigma_v(e_j) e_j^T` for an orthonormal basis
/// `e_j` of `v^perp`: the differential of `F` anywhere on the ray through `v`.
pub fn a_v_matrix(sigma: &SphereMap, v: &UnitVector) -> DMatrix<f64> {
    let v = v.as_vector();
    let mut a = sigma.eval(v) * v.transpose();
    for e in complement_basis(v).column_iter() {
        let e = e.into_owned();
        a += sigma.differential(v, &e) * e.transpose();
    }
    a
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtensionMargin {
    /// `min <A_v u, sigma(u)>` over the sampled pairs; positive certifies the origin.
    pub margin: f64,
    /// Smallest singular value over hull samples of the `A_v` (`None` when no
    /// hull samples were requested). Logged only; not part of the certificate.
    pub hull_min_singular: Option<f64>,
    pub worst_v: DVector<f64>,
    pub worst_u: DVector<f64>,
    /// Index of the sampled geodesic through `worst_v` and `worst_u`.
    pub worst_geodesic_id: usize,
    pub pairs: usize,
}

/// Pairs `(v, u) = (gamma(0), gamma(t_j))` along `sample_count` seeded geodesics
/// on the grid `t_j = j pi / 512`, so that `A_v u = cbar(t_j)` and the margin
/// equals the smallest `<cbar, c>` over the same geodesics.
pub fn extension_nonsingularity_margin(
    sigma: &SphereMap,
    sample_count: usize,
    hull_count: usize,
    seed: u64,
) -> Result<ExtensionMargin> {
    if sample_count == 0 {
        return domain("sample_count must be at least 1");
    }
    let steps = grid_steps(DEFAULT_STEP)?;
    // (A_v, worst inner product, v, worst u) per sampled geodesic.
    type PerGeodesic = (DMatrix<f64>, f64, DVector<f64>, DVector<f64>);
    let mut per: Vec<PerGeodesic> = (0..sample_count)
        .into_par_iter()
        .map(|i| {
            let gamma = sampled_geodesic(sigma.n, seed, i);
            let v = gamma.base.clone();
            let a = a_v_matrix(sigma, &v);
            let mut worst = (f64::INFINITY, DVector::zeros(0));
            for j in 0..=steps {
                let u = gamma.eval(j as f64 * DEFAULT_STEP);
                let val = (&a * &u).dot(&sigma.eval(&u));
                if val < worst.0 {
                    worst = (val, u);
                }
            }
            (a, worst.0, v.into_inner(), worst.1)
        })
        .collect();
    let mut best = 0;
    for (i, p) in per.iter().enumerate() {
        if p.1 < per[best].1 {
            best = i;
        }
    }
    let hull_min_singular = if hull_count == 0 {
        None
    } else {
        let mats: Vec<DMatrix<f64>> = per.iter().map(|p| p.0.clone()).collect();
        let hull = hull_matrix_sample(&mats, seed, hull_count)?;
        Some(hull.par_iter().map(min_singular_value).reduce(|| f64::INFINITY, f64::min))
    };
    let (_, margin, worst_v, worst_u) = per.swap_remove(best);
    Ok(ExtensionMargin {
        margin,
        hull_min_singular,
        worst_v,
        worst_u,
        worst_geodesic_id: best,
        pairs: sample_count * (steps + 1),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtensionBilipReport {
    pub holds: bool,
    /// Largest `|F u - F v| / |u - v|`.
    pub worst_upper: f64,
    /// Smallest `|F u - F v| / |u - v|`.
    pub worst_lower: f64,
    /// `Lip^b` the ratios were finally compared against.
    pub lip_b: f64,
    /// Whether a violation triggered re-estimation of `Lip^b` with 10x pairs.
    pub reestimated: bool,
}

/// Ratios of `F` over `pairs` seeded pairs in the radius-2 ball, cycling
/// through radial pairs, pairs on a common sphere, independent pairs and
/// pairs with one point at the origin.
pub fn extension_bilip_check(sigma: &SphereMap, lip_b: f64, pairs: usize, seed: u64) -> Result<ExtensionBilipReport> {
    let n = sigma.n;
    let ratios: Vec<f64> = (0..pairs)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = item_rng(seed, i as u64);
            let x = UnitVector::random(n, &mut rng).into_inner();
            let (u, v) = match i % 4 {
                0 => (&x * rng.random_range(0.0..2.0), &x * rng.random_range(0.0..2.0)),
                1 => {
                    let r = rng.random_range(0.0..2.0);
                    (&x * r, UnitVector::random(n, &mut rng).into_inner() * r)
                }
                2 => (ball_point(&x, n, &mut rng), {
                    let y = UnitVector::random(n, &mut rng).into_inner();
                    ball_point(&y, n, &mut rng)
                }),
                _ => (DVector::zeros(n), ball_point(&x, n, &mut rng)),
            };
            let d = (&u - &v).norm();
            (d > 0.0).then(|| (radial_extension_eval(sigma, &u) - radial_extension_eval(sigma, &v)).norm() / d)
        })
        .collect();
    let worst_upper = ratios.iter().copied().fold(0.0, f64::max);
    let worst_lower = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let within = |l: f64| worst_lower >= 1.0 / l - 1e-6 && worst_upper <= l + 1e-6;
    let (mut lip, mut reestimated) = (lip_b, false);
    if !within(lip) {
        lip = lip.max(bilip_estimate(sigma, 10 * pairs, seed, true)?);
        reestimated = true;
    }
    Ok(ExtensionBilipReport { holds: within(lip), worst_upper, worst_lower, lip_b: lip, reestimated })
}

/// Uniform point of the radius-2 ball along direction `x`.
fn ball_point<R: Rng + ?Sized>(x: &DVector<f64>, n: usize, rng: &mut R) -> DVector<f64> {
    x * (2.0 * rng.random_range(0.0f64..1.0).powf(1.0 / n as f64))
}
