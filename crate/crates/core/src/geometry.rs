//! Shared numerical primitives: vectors on the unit sphere, great-circle
//! geodesics, angles, the minimum-norm point of a finite convex hull, random
//! convex combinations of matrices and singular-value rank tests.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};

/// A point or vector of the ambient Euclidean space.
pub type EuclVector = DVector<f64>;

/// A real `k x n` matrix, typically an element of a generalized differential.
pub type MatrixSample = DMatrix<f64>;

/// Tolerance for treating a singular value as zero, relative to the largest one.
pub const RANK_RELATIVE_THRESHOLD: f64 = 1e-8;

/// A vector of Euclidean norm one.
///
/// The constructor normalizes its input, so `| ||v|| - 1 |` stays at rounding level.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitVector(DVector<f64>);

impl UnitVector {
    pub fn new(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return domain("cannot normalize a zero or non-finite vector");
        }
        Ok(Self(v / norm))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    /// The `i`-th standard basis vector of `R^n`.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        Self(v)
    }

    /// Uniformly distributed point of `S^{n-1}`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        loop {
            let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = v.norm();
            if norm > 1e-12 {
                return Self(v / norm);
            }
        }
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

impl Deref for UnitVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// A unit-speed great-circle arc `t -> base cos t + tangent sin t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSegment {
    pub base: UnitVector,
    pub tangent: UnitVector,
    pub length: f64,
}

impl GeodesicSegment {
    pub fn new(base: UnitVector, tangent: UnitVector, length: f64) -> Result<Self> {
        if base.len() != tangent.len() {
            return Err(Error::Shape(format!(
                "base has dimension {}, tangent {}",
                base.len(),
                tangent.len()
            )));
        }
        let inner = base.dot(&tangent);
        if inner.abs() > 1e-12 {
            return domain(format!("tangent is not orthogonal to base (<base, tangent> = {inner:e})"));
        }
        if !(length > 0.0 && length <= std::f64::consts::PI) {
            return domain(format!("geodesic length {length} outside (0, pi]"));
        }
        Ok(Self { base, tangent, length })
    }

    /// Half great circle of length `pi` starting at `base` in direction `tangent`.
    pub fn half_circle(base: UnitVector, tangent: UnitVector) -> Result<Self> {
        Self::new(base, tangent, std::f64::consts::PI)
    }

    /// The half great circle leaving `v` through `u`, and the time `t0` at
    /// which it reaches `u`. For `u = +-v` an arbitrary orthogonal tangent is used.
    pub fn through(v: &UnitVector, u: &UnitVector) -> Result<(Self, f64)> {
        let t0 = angle(v, u)?;
        let mut w = u.as_vector() - v.as_vector() * v.dot(u);
        if w.norm() < 1e-12 {
            // u = +-v: any orthogonal direction reaches u at t0 in {0, pi}.
            w = orthogonal_direction(v);
        }
        let w = w.clone() - v.as_vector() * v.dot(&w);
        Ok((Self::half_circle(v.clone(), UnitVector::new(w)?)?, t0))
    }

    /// Uniformly random half great circle: `(v, w)` from orthonormalized Gaussian draws.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        assert!(n >= 2, "geodesics need ambient dimension at least 2");
        let base = UnitVector::random(n, rng);
        loop {
            let g = UnitVector::random(n, rng);
            let w = g.as_vector() - base.as_vector() * base.dot(&g);
            if w.norm() > 1e-6 {
                let mut w = w.normalize();
                // second pass keeps <base, w> at rounding level
                w -= base.as_vector() * base.dot(&w);
                let tangent = UnitVector::new(w).expect("nonzero");
                return Self { base, tangent, length: std::f64::consts::PI };
            }
        }
    }

    /// Evaluates the great circle at any real `t`, including outside `[0, length]`.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        self.base.as_vector() * t.cos() + self.tangent.as_vector() * t.sin()
    }

    pub fn velocity(&self, t: f64) -> DVector<f64> {
        self.tangent.as_vector() * t.cos() - self.base.as_vector() * t.sin()
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }
}

/// Point of `gamma` at time `t`, for `0 <= t <= gamma.length`.
pub fn geodesic_point(gamma: &GeodesicSegment, t: f64) -> Result<UnitVector> {
    if !(0.0..=gamma.length).contains(&t) {
        return domain(format!("t = {t} outside [0, {}]", gamma.length));
    }
    UnitVector::new(gamma.eval(t))
}

/// Angle in `[0, pi]` between two nonzero vectors.
pub fn angle(u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("angle between dimensions {} and {}", u.len(), v.len())));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return domain("angle with a zero vector is undefined");
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0).acos())
}

/// Some unit vector orthogonal to `v` (dimension at least 2).
pub fn orthogonal_direction(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let i = v.iamin();
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    let w = &e - v * (v.dot(&e) / v.norm_squared());
    w.normalize()
}

/// Orthonormal basis of the orthogonal complement of the unit vector `v`,
/// returned as the columns of an `n x (n-1)` matrix.
pub fn complement_basis(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    // Start from the coordinate axes least aligned with v.
    order.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()));
    for &i in &order {
        if basis.len() == n - 1 {
            break;
        }
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        for _ in 0..2 {
            e -= v * v.dot(&e);
            for b in &basis {
                e -= b * b.dot(&e);
            }
        }
        let norm = e.norm();
        if norm > 1e-8 {
            basis.push(e / norm);
        }
    }
    DMatrix::from_columns(&basis)
}

/// Deterministic per-item random stream: the same `(seed, index)` always
/// yields the same sequence, independent of evaluation order.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Result of [`min_norm_in_hull`].
#[derive(Clone, Debug)]
pub struct HullProjection {
    pub witness: DVector<f64>,
    pub distance: f64,
    /// Convex coefficients, one per input point.
    pub weights: Vec<f64>,
    /// Frank-Wolfe duality gap at termination.
    pub gap: f64,
    pub iterations: usize,
}

pub const HULL_ITERATION_CAP: usize = 100_000;

/// Minimum-norm point of the convex hull of `points`.
///
/// Away-step Frank-Wolfe with exact line search on `x -> ||x||^2 / 2`. The
/// duality gap `g = <x, x - s>` bounds `||x - x*||^2 / 2`, so the loop stops
/// once `sqrt(2 g) <= tol`, or once `g` reaches the rounding floor of the
/// instance.
pub fn min_norm_in_hull(points: &[DVector<f64>], tol: f64) -> Result<HullProjection> {
    if points.is_empty() {
        return domain("min_norm_in_hull needs at least one point");
    }
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Shape(format!("hull points of dimension {dim} and {}", bad.len())));
    }
    let m = points.len();
    let scale = points.iter().map(|p| p.norm_squared()).fold(0.0_f64, f64::max);
    let floor = 64.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);

    let start = (0..m)
        .min_by(|&a, &b| points[a].norm_squared().total_cmp(&points[b].norm_squared()))
        .unwrap();
    let mut weights = vec![0.0; m];
    weights[start] = 1.0;
    let mut x = points[start].clone();
    let mut gap = f64::INFINITY;

    for it in 0..HULL_ITERATION_CAP {
        if it % 256 == 255 {
            x = combine(points, &weights, dim);
        }
        let inner: Vec<f64> = points.iter().map(|p| p.dot(&x)).collect();
        let xx = x.norm_squared();
        let (fw, fw_val) = argmin(&inner);
        gap = xx - fw_val;
        if gap <= 0.5 * tol * tol || gap <= floor {
            return Ok(finish(x, weights, gap, it));
        }
        let (away, away_val) = inner
            .iter()
            .enumerate()
            .filter(|(i, _)| weights[*i] > 0.0)
            .map(|(i, v)| (i, *v))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let away_gap = away_val - xx;

        if gap >= away_gap || weights[away] >= 1.0 {
            let d = &points[fw] - &x;
            let dd = d.norm_squared();
            if dd == 0.0 {
                return Ok(finish(x, weights, gap, it));
            }
            let step = (-x.dot(&d) / dd).clamp(0.0, 1.0);
            for w in weights.iter_mut() {
                *w *= 1.0 - step;
            }
            weights[fw] += step;
            x += d * step;
        } else {
            let d = &x - &points[away];
            let dd = d.norm_squared();
            if dd == 0.0 {
                return Ok(finish(x, weights, gap, it));
            }
            let max_step = weights[away] / (1.0 - weights[away]);
            let step = (-x.dot(&d) / dd).clamp(0.0, max_step);
            for w in weights.iter_mut() {
                *w *= 1.0 + step;
            }
            weights[away] -= step;
            if step >= max_step {
                weights[away] = 0.0;
            }
            x += d * step;
        }
    }
    Err(Error::NoConvergence { iterations: HULL_ITERATION_CAP, gap })
}

fn argmin(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| (i, *v))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

fn combine(points: &[DVector<f64>], weights: &[f64], dim: usize) -> DVector<f64> {
    let mut x = DVector::zeros(dim);
    for (p, w) in points.iter().zip(weights) {
        if *w != 0.0 {
            x.axpy(*w, p, 1.0);
        }
    }
    x
}

fn finish(x: DVector<f64>, mut weights: Vec<f64>, gap: f64, iterations: usize) -> HullProjection {
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w = w.max(0.0) / total;
    }
    HullProjection { distance: x.norm(), witness: x, weights, gap: gap.max(0.0), iterations }
}

/// Random convex combinations of `matrices`.
///
/// The first outputs are the matrices themselves; the remaining
/// `count - matrices.len()` are combinations with weights from a symmetric
/// Dirichlet(1, ..., 1) draw. Output `i` depends only on `(seed, i)`.
pub fn hull_matrix_sample(matrices: &[DMatrix<f64>], seed: u64, count: usize) -> Result<Vec<DMatrix<f64>>> {
    if matrices.is_empty() {
        return domain("hull_matrix_sample needs at least one matrix");
    }
    if count == 0 {
        return domain("count must be at least 1");
    }
    let shape = matrices[0].shape();
    if let Some(bad) = matrices.iter().find(|m| m.shape() != shape) {
        return Err(Error::Shape(format!("matrices of shape {shape:?} and {:?}", bad.shape())));
    }
    let m = matrices.len();
    let mut out: Vec<DMatrix<f64>> = matrices.to_vec();
    if count > m {
        let extra: Vec<DMatrix<f64>> = (m..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = item_rng(seed, i as u64);
                let raw: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let total: f64 = raw.iter().sum();
                let mut acc = DMatrix::zeros(shape.0, shape.1);
                for (w, a) in raw.iter().zip(matrices) {
                    acc += a * (w / total);
                }
                acc
            })
            .collect();
        out.extend(extra);
    }
    Ok(out)
}

/// Smallest of the `min(k, n)` singular values.
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().copied().fold(f64::INFINITY, f64::min).max(0.0)
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Number of singular values above `RANK_RELATIVE_THRESHOLD` times the largest.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    let largest = sv.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_RELATIVE_THRESHOLD * largest).count()
}

/// Largest `|<a_i, a_j> - delta_ij|` over a family of vectors.
pub fn gram_deviation(vectors: &[DVector<f64>]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.dot(b) - target).abs());
        }
    }
    worst
}

/// The count `k` used by [`near_orthonormal_dependent`]: the least integer with
/// `k >= 4 (1 - eps^2) / eps^2`.
pub fn near_orthonormal_count(eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return domain(format!("epsilon must lie in (0, 1), got {eps}"));
    }
    let bound = 4.0 * (1.0 - eps * eps) / (eps * eps);
    // Absorb rounding when the bound is an exact integer (eps = 0.5, 0.1, ...).
    let k = (bound - 1e-9 * bound.max(1.0)).ceil().max(1.0);
    Ok(k as usize)
}

/// `k + 1` vectors in `R^{k+1}` whose Gram matrix is within `eps` of the
/// identity entrywise, yet which span only a `k`-dimensional subspace.
///
/// `a_i = e_i` for `i <= k` and `a_{k+1} = (eps/2) (e_1 + ... + e_k)`, so
/// `|<a_{k+1}, a_i>| = eps/2` and `1 - ||a_{k+1}||^2 = 1 - k eps^2 / 4 <= eps^2`.
pub fn near_orthonormal_dependent(eps: f64) -> Result<Vec<DVector<f64>>> {
    let k = near_orthonormal_count(eps)?;
    let n = k + 1;
    let mut out: Vec<DVector<f64>> = (0..k).map(|i| UnitVector::basis(n, i).into_inner()).collect();
    let mut last = DVector::zeros(n);
    for j in 0..k {
        last[j] = eps / 2.0;
    }
    out.push(last);
    Ok(out)
}

/// The coefficient `sqrt(1 - k eps^2 / 4)` that would complete `a_{k+1}` to a
/// unit vector along `e_{k+1}`; it equals the Gram deviation of the last
/// diagonal entry in [`near_orthonormal_dependent`] after squaring.
pub fn near_orthonormal_residual(eps: f64) -> Result<f64> {
    let k = near_orthonormal_count(eps)? as f64;
    Ok((1.0 - k * eps * eps / 4.0).max(0.0).sqrt())
}

/// Minimum over `lambda in {0, 1/grid, ..., 1}` of the smallest singular value
/// of `lambda A + (1 - lambda) B`, for square `A`, `B` that fix the hyperplane
/// `x_n = 0` pointwise and send the normal `e_n` to a vector with positive
/// `e_n` component.
pub fn hyperplane_convex_rank_margin(a: &DMatrix<f64>, b: &DMatrix<f64>, grid: usize) -> Result<f64> {
    const TOL: f64 = 1e-10;
    if !a.is_square() || a.shape() != b.shape() {
        return Err(Error::Shape(format!("need equal square matrices, got {:?} and {:?}", a.shape(), b.shape())));
    }
    if grid == 0 {
        return domain("grid must be at least 1");
    }
    let n = a.nrows();
    for (name, m) in [("A", a), ("B", b)] {
        for j in 0..n - 1 {
            for i in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                if (m[(i, j)] - target).abs() > TOL {
                    return domain(format!("{name} does not restrict to the identity on the hyperplane x_n = 0"));
                }
            }
        }
        if m[(n - 1, n - 1)] <= TOL {
            return domain(format!("positive normal component violated for {name}: <{name} n, n> = {}", m[(n - 1, n - 1)]));
        }
    }
    let margin = (0..=grid)
        .map(|i| {
            let lambda = i as f64 / grid as f64;
            min_singular_value(&(a * lambda + b * (1.0 - lambda)))
        })
        .fold(f64::INFINITY, f64::min);
    Ok(margin)
}
