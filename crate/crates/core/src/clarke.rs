//! Sampling surrogates for Clarke generalized gradients and differentials.
//!
//! Gradients (or Jacobians) of a Lipschitz oracle are collected at random
//! points in a shrinking family of balls around `x`; the convex hull of the
//! collected samples stands in for `Conv{lim grad f(x_i) : x_i -> x}`.
//!
//! The sampled hull is contained in the hull over each ball, so a verdict of
//! "critical"/"singular" (origin inside the sampled hull, or a singular
//! element exhibited) is a certificate, while "non-critical"/"non-singular"
//! only says that no sampled element witnessed the opposite.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::geometry::{hull_matrix_sample, item_rng, min_norm_in_hull, min_singular_value, UnitVector};

/// Retries per sample point when the oracle reports a non-differentiability point.
pub const MAX_RETRIES: usize = 100;

/// A Lipschitz function `R^n -> R` (or on a submanifold given in ambient
/// coordinates) together with its almost-everywhere gradient.
pub trait LipschitzFunction: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> f64;
    /// `None` where `f` is not differentiable.
    fn gradient_ae(&self, x: &DVector<f64>) -> Option<DVector<f64>>;
    fn lip_bound(&self) -> f64;
}

/// A Lipschitz map `R^n -> R^k` with its almost-everywhere Jacobian.
pub trait LipschitzMap: Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `k x n` Jacobian, `None` where `F` is not differentiable.
    fn jacobian_ae(&self, x: &DVector<f64>) -> Option<DMatrix<f64>>;
    fn lip_bound(&self) -> f64;
}

type ScalarFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&DVector<f64>) -> Option<DVector<f64>> + Send + Sync>;
type VectorFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type JacFn = Box<dyn Fn(&DVector<f64>) -> Option<DMatrix<f64>> + Send + Sync>;

/// A [`LipschitzFunction`] assembled from closures.
pub struct FnFunction {
    dim: usize,
    lip: f64,
    eval: ScalarFn,
    grad: GradFn,
}

impl FnFunction {
    pub fn new(
        dim: usize,
        lip: f64,
        eval: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&DVector<f64>) -> Option<DVector<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, lip, eval: Box::new(eval), grad: Box::new(grad) }
    }
}

impl LipschitzFunction for FnFunction {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &DVector<f64>) -> f64 {
        (self.eval)(x)
    }
    fn gradient_ae(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        (self.grad)(x)
    }
    fn lip_bound(&self) -> f64 {
        self.lip
    }
}

/// A [`LipschitzMap`] assembled from closures.
pub struct FnMap {
    dim_in: usize,
    dim_out: usize,
    lip: f64,
    eval: VectorFn,
    jac: JacFn,
}

impl FnMap {
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        lip: f64,
        eval: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jac: impl Fn(&DVector<f64>) -> Option<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self { dim_in, dim_out, lip, eval: Box::new(eval), jac: Box::new(jac) }
    }

    /// `x -> J x + b`.
    pub fn affine(jacobian: DMatrix<f64>, offset: DVector<f64>) -> Self {
        let lip = jacobian.clone().svd(false, false).singular_values.max();
        let (k, n) = jacobian.shape();
        let j2 = jacobian.clone();
        Self::new(n, k, lip, move |x| &jacobian * x + &offset, move |_| Some(j2.clone()))
    }
}

impl LipschitzMap for FnMap {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.eval)(x)
    }
    fn jacobian_ae(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        (self.jac)(x)
    }
    fn lip_bound(&self) -> f64 {
        self.lip
    }
}

/// Standard nonsmooth test functions and maps.
pub mod catalog {
    use super::*;

    /// `f(x) = max(x^2, x + 2)` on `(-2, 3)`; kinks at `x = -1` and `x = 2`.
    pub fn max_square_line() -> FnFunction {
        FnFunction::new(
            1,
            6.0,
            |x| (x[0] * x[0]).max(x[0] + 2.0),
            |x| {
                let (a, b) = (x[0] * x[0], x[0] + 2.0);
                if a > b {
                    Some(DVector::from_element(1, 2.0 * x[0]))
                } else if b > a {
                    Some(DVector::from_element(1, 1.0))
                } else {
                    None
                }
            },
        )
    }

    /// `F(x, y) = (|x| + y, 2x + |y|)`, non-differentiable on the axes.
    pub fn abs_sum_map() -> FnMap {
        FnMap::new(
            2,
            2,
            // Frobenius norm of [[+-1, 1], [2, +-1]]
            7f64.sqrt(),
            |x| DVector::from_column_slice(&[x[0].abs() + x[1], 2.0 * x[0] + x[1].abs()]),
            |x| {
                if x[0] == 0.0 || x[1] == 0.0 {
                    return None;
                }
                Some(DMatrix::from_row_slice(2, 2, &[x[0].signum(), 1.0, 2.0, x[1].signum()]))
            },
        )
    }

    /// `F(x) = |x|` on the line: a fold at the origin.
    pub fn fold_map() -> FnMap {
        FnMap::new(
            1,
            1,
            1.0,
            |x| DVector::from_element(1, x[0].abs()),
            |x| (x[0] != 0.0).then(|| DMatrix::from_element(1, 1, x[0].signum())),
        )
    }

    /// `f(x) = <g, x>`.
    pub fn linear(g: DVector<f64>) -> FnFunction {
        let lip = g.norm();
        let g2 = g.clone();
        FnFunction::new(g.len(), lip, move |x| g.dot(x), move |_| Some(g2.clone()))
    }

    /// Euclidean norm `f(x) = ||x - c||`, non-differentiable at `c`.
    pub fn distance_to(c: DVector<f64>) -> FnFunction {
        let c2 = c.clone();
        FnFunction::new(
            c.len(),
            1.0,
            move |x| (x - &c).norm(),
            move |x| {
                let d = x - &c2;
                let n = d.norm();
                (n > 0.0).then(|| d / n)
            },
        )
    }

    /// `f(x) = max_i <a_i, x>`, non-differentiable where the maximum is attained twice.
    pub fn max_linear(pieces: Vec<DVector<f64>>) -> FnFunction {
        let dim = pieces[0].len();
        let lip = pieces.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let p2 = pieces.clone();
        FnFunction::new(
            dim,
            lip,
            move |x| pieces.iter().map(|a| a.dot(x)).fold(f64::NEG_INFINITY, f64::max),
            move |x| {
                let vals: Vec<f64> = p2.iter().map(|a| a.dot(x)).collect();
                let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let active: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] == top).collect();
                (active.len() == 1).then(|| p2[active[0]].clone())
            },
        )
    }
}

/// Radii and sample counts for the shrinking-ball sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingConfig {
    /// Strictly decreasing, positive.
    pub radii: Vec<f64>,
    pub per_radius: usize,
    pub seed: u64,
}

impl SamplingConfig {
    /// Radii `{1e-1, 1e-2, 1e-3} * scale`, 64 samples per radius.
    pub fn scaled(scale: f64, seed: u64) -> Self {
        Self { radii: vec![1e-1 * scale, 1e-2 * scale, 1e-3 * scale], per_radius: 64, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0)) {
            return domain("radii must be non-empty and positive");
        }
        if self.radii.windows(2).any(|w| w[1] >= w[0]) {
            return domain("radii must be strictly decreasing");
        }
        if self.per_radius == 0 {
            return domain("per_radius must be at least 1");
        }
        Ok(())
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self::scaled(1.0, 0)
    }
}

/// Sampled generalized gradient at `point`.
#[derive(Clone, Debug)]
pub struct GeneralizedGradient {
    pub point: DVector<f64>,
    pub samples: Vec<DVector<f64>>,
    /// Ball radius each sample was drawn from, parallel to `samples`.
    pub radii_used: Vec<f64>,
    pub seed: u64,
}

impl GeneralizedGradient {
    /// Coordinate-wise `[min, max]` of the samples. For `n = 1` this is the hull.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let n = self.point.len();
        (0..n)
            .map(|i| {
                self.samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s[i]), hi.max(s[i])))
            })
            .collect()
    }

    /// Samples drawn from the innermost ball only.
    pub fn innermost(&self) -> Vec<DVector<f64>> {
        let r = self.radii_used.iter().copied().fold(f64::INFINITY, f64::min);
        self.samples.iter().zip(&self.radii_used).filter(|(_, ri)| **ri == r).map(|(s, _)| s.clone()).collect()
    }
}

/// Sampled generalized differential at `point`.
#[derive(Clone, Debug)]
pub struct GeneralizedDifferential {
    pub point: DVector<f64>,
    pub samples: Vec<DMatrix<f64>>,
    pub radii_used: Vec<f64>,
    pub seed: u64,
}

fn uniform_in_ball<R: Rng + ?Sized>(center: &DVector<f64>, radius: f64, rng: &mut R) -> DVector<f64> {
    let n = center.len();
    let dir = UnitVector::random(n, rng);
    let u: f64 = rng.random();
    center + dir.as_vector() * (radius * u.powf(1.0 / n as f64))
}

/// Draws `cfg.per_radius` points per radius and evaluates `oracle` there,
/// retrying where it is undefined.
fn sample_oracle<T: Send>(
    x: &DVector<f64>,
    cfg: &SamplingConfig,
    oracle: impl Fn(&DVector<f64>) -> Option<T> + Sync,
) -> Result<(Vec<T>, Vec<f64>)> {
    cfg.validate()?;
    let total = cfg.radii.len() * cfg.per_radius;
    let drawn: Vec<Result<(T, f64)>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let r = cfg.radii[idx / cfg.per_radius];
            let mut rng = item_rng(cfg.seed, idx as u64);
            for _ in 0..MAX_RETRIES {
                let y = uniform_in_ball(x, r, &mut rng);
                if let Some(v) = oracle(&y) {
                    return Ok((v, r));
                }
            }
            Err(Error::UndefinedOracle { index: idx, retries: MAX_RETRIES })
        })
        .collect();
    let mut samples = Vec::with_capacity(total);
    let mut radii = Vec::with_capacity(total);
    for d in drawn {
        let (v, r) = d?;
        samples.push(v);
        radii.push(r);
    }
    Ok((samples, radii))
}

pub fn sample_generalized_gradient<F: LipschitzFunction + ?Sized>(
    f: &F,
    x: &DVector<f64>,
    cfg: &SamplingConfig,
) -> Result<GeneralizedGradient> {
    if x.len() != f.dim() {
        return Err(Error::Shape(format!("point of dimension {} for a function on R^{}", x.len(), f.dim())));
    }
    let (samples, radii_used) = sample_oracle(x, cfg, |y| f.gradient_ae(y))?;
    Ok(GeneralizedGradient { point: x.clone(), samples, radii_used, seed: cfg.seed })
}

pub fn sample_generalized_differential<F: LipschitzMap + ?Sized>(
    map: &F,
    x: &DVector<f64>,
    cfg: &SamplingConfig,
) -> Result<GeneralizedDifferential> {
    if x.len() != map.dim_in() {
        return Err(Error::Shape(format!("point of dimension {} for a map on R^{}", x.len(), map.dim_in())));
    }
    let (samples, radii_used) = sample_oracle(x, cfg, |y| map.jacobian_ae(y))?;
    Ok(GeneralizedDifferential { point: x.clone(), samples, radii_used, seed: cfg.seed })
}

/// Verdict of [`is_critical`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Criticality {
    pub critical: bool,
    /// Distance from the origin to the hull of the samples.
    pub margin: f64,
}

/// Default criticality tolerance: `1e-3` times the Lipschitz bound.
pub fn default_critical_tol(lip_bound: f64) -> f64 {
    1e-3 * lip_bound
}

/// `x` is reported critical when the origin lies within `tol` of the sampled hull.
pub fn is_critical(gg: &GeneralizedGradient, tol: f64) -> Result<Criticality> {
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let hull = min_norm_in_hull(&gg.samples, (tol * 1e-3).max(1e-12))?;
    Ok(Criticality { critical: hull.distance <= tol, margin: hull.distance })
}

/// Minimum smallest-singular-value over the samples and `hull_count` random
/// convex combinations of them.
pub fn nonsingularity_margin(gd: &GeneralizedDifferential, hull_count: usize, seed: u64) -> Result<f64> {
    if gd.samples.is_empty() {
        return domain("generalized differential has no samples");
    }
    let (k, n) = gd.samples[0].shape();
    if k < n {
        return domain(format!("maximal-rank test needs k >= n, got a {k}x{n} differential"));
    }
    let all = hull_matrix_sample(&gd.samples, seed, gd.samples.len() + hull_count)?;
    Ok(all.par_iter().map(min_singular_value).reduce(|| f64::INFINITY, f64::min))
}

/// Separating direction for `{A u : A in samples}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeCertificate {
    /// Normalized min-norm point of the image hull; `None` when it is the origin.
    pub v: Option<UnitVector>,
    /// `min_A <A u, v>`; positive exactly when the origin is separated.
    pub delta: f64,
}

impl ConeCertificate {
    pub fn certified(&self) -> bool {
        self.v.is_some() && self.delta > 0.0
    }
}

pub fn cone_certificate(gd: &GeneralizedDifferential, u: &UnitVector) -> Result<ConeCertificate> {
    if gd.samples.is_empty() {
        return domain("generalized differential has no samples");
    }
    let (k, n) = gd.samples[0].shape();
    if k < n {
        return domain(format!("cone certificate needs k >= n, got a {k}x{n} differential"));
    }
    if u.len() != n {
        return Err(Error::Shape(format!("direction of dimension {} for {k}x{n} matrices", u.len())));
    }
    let images: Vec<DVector<f64>> = gd.samples.iter().map(|a| a * u.as_vector()).collect();
    let scale = images.iter().map(|y| y.norm()).fold(0.0, f64::max);
    let hull = min_norm_in_hull(&images, (1e-12 * scale).max(1e-300))?;
    if hull.distance <= 1e-9 * scale.max(1.0) {
        return Ok(ConeCertificate { v: None, delta: 0.0 });
    }
    let v = UnitVector::new(hull.witness)?;
    let delta = images.iter().map(|y| y.dot(&v)).fold(f64::INFINITY, f64::min);
    Ok(ConeCertificate { v: Some(v), delta })
}

/// Outcome of [`increasing_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncreasingReport {
    pub holds: bool,
    pub worst_ratio: f64,
}

/// Worst expansion ratio `||F(q2) - F(q1)|| / ||q2 - q1||` over `pairs`
/// random pairs in the closed ball of radius `r` around `p`.
pub fn increasing_check<F: LipschitzMap + ?Sized>(
    map: &F,
    p: &DVector<f64>,
    r: f64,
    delta: f64,
    pairs: usize,
    seed: u64,
) -> Result<IncreasingReport> {
    if !(r > 0.0) || !(delta > 0.0) {
        return domain("radius and delta must be positive");
    }
    let worst_ratio = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, i as u64);
            let q1 = uniform_in_ball(p, r, &mut rng);
            let q2 = uniform_in_ball(p, r, &mut rng);
            let d = (&q2 - &q1).norm();
            if d == 0.0 {
                f64::INFINITY
            } else {
                (map.eval(&q2) - map.eval(&q1)).norm() / d
            }
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(IncreasingReport { holds: worst_ratio >= delta, worst_ratio })
}
