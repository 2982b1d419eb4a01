//! Mollifier smoothing of Lipschitz functions and maps through exponential
//! charts glued by a partition of unity:
//!
//! `f_eps(q) = sum_i psi_i(q) int f(exp_i(log_i q - y)) rho_eps(y) dy`.
//!
//! The integral is replaced by a fixed quadrature rule, and the reported
//! derivatives are the exact derivatives of that discrete sum.

mod charts;
mod quadrature;

pub use charts::{Chart, PartitionOfUnity, PouReport, PouWeight};
pub use quadrature::{
    composite_gauss, gauss_legendre, mollifier_density, sphere_area, Mollifier, QuadratureKind, QuadratureRule, MAX_DIM,
};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::clarke::{cone_certificate, sample_generalized_differential, sample_generalized_gradient, LipschitzFunction, LipschitzMap, SamplingConfig};
use crate::error::{domain, Error, Result};
use crate::geometry::{angle, item_rng, min_norm_in_hull, min_singular_value, UnitVector};
use crate::manifolds::{DistanceFunction, ModelManifold};

/// Step for the finite-difference fallback where an oracle has no gradient.
const FD_STEP: f64 = 1e-7;

/// Shared machinery of [`SmoothedFunction`] and [`SmoothedMap`].
#[derive(Clone, Debug)]
struct Smoother<'a> {
    pou: &'a PartitionOfUnity,
    mollifier: Mollifier,
    quad: QuadratureRule,
}

impl<'a> Smoother<'a> {
    fn new(pou: &'a PartitionOfUnity, epsilon: f64, kind: QuadratureKind, ambient: usize) -> Result<Self> {
        if ambient != pou.manifold.ambient_dim() {
            return Err(Error::Shape(format!("oracle on R^{ambient} but the manifold lives in R^{}", pou.manifold.ambient_dim())));
        }
        let mollifier = Mollifier::new(pou.manifold.dim(), epsilon)?;
        let quad = QuadratureRule::new(&mollifier, kind)?;
        Ok(Self { pou, mollifier, quad })
    }

    /// Partition weights at `q` after checking that `eps` fits every chart
    /// touching `q`.
    fn weights(&self, q: &DVector<f64>) -> Result<Vec<PouWeight>> {
        self.pou.manifold.validate_point(q)?;
        let w = self.pou.weights(q);
        if w.is_empty() {
            return domain(format!("point {:?} is not covered by the partition of unity", q.as_slice()));
        }
        let eps = self.mollifier.epsilon;
        for x in &w {
            let c = &self.pou.charts[x.chart];
            if eps >= c.radius - c.bump_radius {
                return domain(format!(
                    "epsilon {eps} too large for chart {} centred at {:?}: needs epsilon < {}",
                    x.chart,
                    c.center.as_slice(),
                    c.radius - c.bump_radius
                ));
            }
        }
        Ok(w)
    }

    /// Points `exp_i(log_i q - y_k)` for every quadrature node.
    fn nodes(&self, chart: &Chart, q: &DVector<f64>) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
        let w = chart.log(q)?;
        let pts = chart.exp_shifted(&w, &self.quad.nodes);
        Ok((w, pts))
    }
}

/// Directional derivatives of `g` along the columns of `dexp_i` at `w`, by
/// central differences in the chart.
fn chart_fd<T>(chart: &Chart, w: &DVector<f64>, g: impl Fn(&DVector<f64>) -> T, sub: impl Fn(T, T) -> T, scale: impl Fn(T, f64) -> T) -> Vec<T> {
    (0..chart.dim())
        .map(|j| {
            let mut e = DVector::zeros(chart.dim());
            e[j] = FD_STEP;
            scale(sub(g(&chart.exp(&(w + &e))), g(&chart.exp(&(w - &e)))), 0.5 / FD_STEP)
        })
        .collect()
}

/// `f_eps` for a Lipschitz function given in ambient coordinates.
pub struct SmoothedFunction<'a, F: LipschitzFunction + ?Sized> {
    pub source: &'a F,
    smoother: Smoother<'a>,
}

pub fn smooth_function<'a, F: LipschitzFunction + ?Sized>(
    f: &'a F,
    pou: &'a PartitionOfUnity,
    epsilon: f64,
    quad: QuadratureKind,
) -> Result<SmoothedFunction<'a, F>> {
    Ok(SmoothedFunction { source: f, smoother: Smoother::new(pou, epsilon, quad, f.dim())? })
}

impl<F: LipschitzFunction + ?Sized> SmoothedFunction<'_, F> {
    pub fn epsilon(&self) -> f64 {
        self.smoother.mollifier.epsilon
    }

    pub fn pou(&self) -> &PartitionOfUnity {
        self.smoother.pou
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.smoother.quad
    }

    fn local_value(&self, pts: &[DVector<f64>]) -> f64 {
        pts.iter().zip(&self.smoother.quad.weights).map(|(z, w)| w * self.source.eval(z)).sum()
    }

    pub fn evaluate(&self, q: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for x in self.smoother.weights(q)? {
            let (_, pts) = self.smoother.nodes(&self.smoother.pou.charts[x.chart], q)?;
            total += x.value * self.local_value(&pts);
        }
        Ok(total)
    }

    /// Gradient of [`Self::evaluate`] as an ambient tangent vector at `q`.
    pub fn gradient(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let mut grad = DVector::zeros(q.len());
        for x in self.smoother.weights(q)? {
            let chart = &self.smoother.pou.charts[x.chart];
            let (w, pts) = self.smoother.nodes(chart, q)?;
            // Chart-coordinate gradient: sum_k w_k dexp(w - y_k)^T grad f(z_k).
            let mut local = DVector::zeros(chart.dim());
            for ((y, z), wk) in self.smoother.quad.nodes.iter().zip(&pts).zip(&self.smoother.quad.weights) {
                match self.source.gradient_ae(z) {
                    Some(g) if chart.is_flat() => local.axpy(*wk, &g, 1.0),
                    Some(g) => local.axpy(*wk, &(chart.dexp(&(&w - y)).transpose() * g), 1.0),
                    None => {
                        let g = DVector::from_vec(chart_fd(chart, &(&w - y), |p| self.source.eval(p), |a, b| a - b, |a, s| a * s));
                        local.axpy(*wk, &g, 1.0)
                    }
                }
            }
            grad += chart.dlog(q)?.transpose() * local * x.value + &x.gradient * self.local_value(&pts);
        }
        Ok(grad)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupErrorReport {
    pub max_abs_err: f64,
    /// `eps * Lip(f) * max_q sum_i psi_i(q) Lip(exp_i)`.
    pub bound: f64,
    pub holds: bool,
    pub worst_point: Option<DVector<f64>>,
}

/// Measured `sup |f_eps - f|` over `grid` against the mollification bound.
pub fn sup_error_report<F: LipschitzFunction + ?Sized>(sf: &SmoothedFunction<'_, F>, grid: &[DVector<f64>]) -> Result<SupErrorReport> {
    let rows: Vec<Result<(f64, f64)>> = grid
        .par_iter()
        .map(|q| {
            let err = (sf.evaluate(q)? - sf.source.eval(q)).abs();
            let lip: f64 = sf.pou().weights(q).iter().map(|x| x.value * sf.pou().charts[x.chart].exp_lip).sum();
            Ok((err, lip))
        })
        .collect();
    let mut max_abs_err = 0.0;
    let mut max_lip: f64 = 0.0;
    let mut worst_point = None;
    for (q, r) in grid.iter().zip(rows) {
        let (err, lip) = r?;
        if err > max_abs_err || worst_point.is_none() {
            max_abs_err = err;
            worst_point = Some(q.clone());
        }
        max_lip = max_lip.max(lip);
    }
    let bound = sf.epsilon() * sf.source.lip_bound() * max_lip;
    Ok(SupErrorReport { max_abs_err, bound, holds: max_abs_err <= bound + 1e-9, worst_point })
}

/// `F_eps` for a Lipschitz map given in ambient coordinates.
pub struct SmoothedMap<'a, F: LipschitzMap + ?Sized> {
    pub source: &'a F,
    smoother: Smoother<'a>,
}

pub fn smooth_map<'a, F: LipschitzMap + ?Sized>(
    map: &'a F,
    pou: &'a PartitionOfUnity,
    epsilon: f64,
    quad: QuadratureKind,
) -> Result<SmoothedMap<'a, F>> {
    Ok(SmoothedMap { source: map, smoother: Smoother::new(pou, epsilon, quad, map.dim_in())? })
}

impl<F: LipschitzMap + ?Sized> SmoothedMap<'_, F> {
    pub fn epsilon(&self) -> f64 {
        self.smoother.mollifier.epsilon
    }

    pub fn pou(&self) -> &PartitionOfUnity {
        self.smoother.pou
    }

    fn local_value(&self, pts: &[DVector<f64>]) -> DVector<f64> {
        pts.iter().zip(&self.smoother.quad.weights).fold(DVector::zeros(self.source.dim_out()), |acc, (z, w)| acc + self.source.eval(z) * *w)
    }

    pub fn evaluate(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let mut total = DVector::zeros(self.source.dim_out());
        for x in self.smoother.weights(q)? {
            let (_, pts) = self.smoother.nodes(&self.smoother.pou.charts[x.chart], q)?;
            total += self.local_value(&pts) * x.value;
        }
        Ok(total)
    }

    /// `dF_eps` at `q` as a `dim_out x ambient` matrix acting on tangent vectors.
    pub fn differential(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let m = self.source.dim_out();
        let mut out = DMatrix::zeros(m, q.len());
        for x in self.smoother.weights(q)? {
            let chart = &self.smoother.pou.charts[x.chart];
            let (w, pts) = self.smoother.nodes(chart, q)?;
            let mut local = DMatrix::zeros(m, chart.dim());
            for ((y, z), wk) in self.smoother.quad.nodes.iter().zip(&pts).zip(&self.smoother.quad.weights) {
                let wy = &w - y;
                let j = match self.source.jacobian_ae(z) {
                    Some(j) => j * chart.dexp(&wy),
                    None => DMatrix::from_columns(&chart_fd(chart, &wy, |p| self.source.eval(p), |a, b| a - b, |a, s| a * s)),
                };
                local += j * *wk;
            }
            out += local * chart.dlog(q)? * x.value + self.local_value(&pts) * x.gradient.transpose();
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzReport {
    /// `max_q max_{|u| = 1, u in T_q M} |dF_eps(u)|` over the grid.
    pub sup_norm: f64,
    /// `(1 + eta) Lip(F)`.
    pub bound: f64,
    pub holds: bool,
}

pub fn lipschitz_report<F: LipschitzMap + ?Sized>(
    smf: &SmoothedMap<'_, F>,
    grid: &[DVector<f64>],
    eta: f64,
    lip: f64,
) -> Result<LipschitzReport> {
    let man = smf.pou().manifold;
    let norms: Vec<Result<f64>> = grid
        .par_iter()
        .map(|q| {
            let d = smf.differential(q)? * man.tangent_basis(q);
            Ok(d.svd(false, false).singular_values.max())
        })
        .collect();
    let mut sup_norm: f64 = 0.0;
    for n in norms {
        sup_norm = sup_norm.max(n?);
    }
    let bound = (1.0 + eta) * lip;
    Ok(LipschitzReport { sup_norm, bound, holds: sup_norm <= bound })
}

/// Largest `|F(a) - F(b)| / d(a, b)` over `pairs` seeded random pairs: `a`
/// drawn from `points`, `b = exp_a(t v)` for a random unit tangent `v` and
/// `t` uniform in `(0, reach]`.
pub fn estimate_lipschitz<F: LipschitzMap + ?Sized>(
    map: &F,
    man: &ModelManifold,
    points: &[DVector<f64>],
    reach: f64,
    pairs: usize,
    seed: u64,
) -> f64 {
    use rand::Rng;
    (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, i as u64);
            let a = &points[rng.random_range(0..points.len())];
            let v = man.tangent_basis(a) * UnitVector::random(man.dim(), &mut rng).into_inner();
            let t = reach * (1.0 - rng.random::<f64>());
            let b = man.exp(a, &(v * t));
            let d = man.distance(a, &b);
            if d <= 1e-12 {
                0.0
            } else {
                (map.eval(a) - map.eval(&b)).norm() / d
            }
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionCertificate {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub delta: f64,
    /// `min_q <dF_eps(q) u, v>` over the sampled ball.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImmersionReport {
    pub margin: f64,
    /// Smallest certificate constant over the direction grid.
    pub delta: f64,
    /// `margin >= delta / 3`.
    pub holds: bool,
    pub per_direction: Vec<DirectionCertificate>,
}

/// Lower bound `min <dF_eps(q) u, V_u>` over `ball_points` points `q` of the
/// `r`-ball around `p` (plus `p`) and directions `u`, where `V_u` is the
/// separating direction of the sampled generalized differential at `p`.
/// Targets are Euclidean, so `V_u` needs no transport.
pub fn immersion_margin<F: LipschitzMap + ?Sized>(
    smf: &SmoothedMap<'_, F>,
    p: &DVector<f64>,
    r: f64,
    directions: &[UnitVector],
    ball_points: usize,
    cfg: &SamplingConfig,
) -> Result<ImmersionReport> {
    let man = smf.pou().manifold;
    if !matches!(man, ModelManifold::Euclidean(_)) {
        return domain("immersion margin is implemented for maps on Euclidean space");
    }
    if !(r > 0.0) || directions.is_empty() {
        return domain("radius must be positive and the direction grid non-empty");
    }
    let gd = sample_generalized_differential(smf.source, p, cfg)?;
    let mut certs = Vec::with_capacity(directions.len());
    for u in directions {
        let c = cone_certificate(&gd, u)?;
        match (c.certified(), c.v) {
            (true, Some(v)) => certs.push((u.as_vector().clone(), v.into_inner(), c.delta)),
            _ => return Err(Error::MissingCertificate(format!("non-singularity certificate missing for direction {:?}", u.as_slice()))),
        }
    }
    let n = p.len();
    let mut points = vec![p.clone()];
    for i in 0..ball_points {
        let mut rng = item_rng(cfg.seed ^ 0x5eed, i as u64);
        let dir = UnitVector::random(n, &mut rng);
        let t: f64 = rand::Rng::random(&mut rng);
        points.push(p + dir.as_vector() * (r * t.powf(1.0 / n as f64)));
    }
    let diffs: Vec<DMatrix<f64>> = points.par_iter().map(|q| smf.differential(q)).collect::<Result<_>>()?;
    let per_direction: Vec<DirectionCertificate> = certs
        .into_iter()
        .map(|(u, v, delta)| {
            let margin = diffs.iter().map(|d| (d * &u).dot(&v)).fold(f64::INFINITY, f64::min);
            DirectionCertificate { u, v, delta, margin }
        })
        .collect();
    let margin = per_direction.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let delta = per_direction.iter().map(|c| c.delta).fold(f64::INFINITY, f64::min);
    Ok(ImmersionReport { margin, delta, holds: margin >= delta / 3.0, per_direction })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObtuseReport {
    pub min_angle: f64,
    pub holds: bool,
    pub worst_point: Option<DVector<f64>>,
}

/// Smallest angle between the smoothed gradients of `d_p` and `d_q` over
/// `k_grid`, after checking that the unsmoothed minimal directions towards
/// `p` and `q` are obtuse at every grid point.
pub fn obtuse_gradient_report(
    pou: &PartitionOfUnity,
    p: &DVector<f64>,
    q: &DVector<f64>,
    k_grid: &[DVector<f64>],
    epsilon: f64,
    quad: QuadratureKind,
) -> Result<ObtuseReport> {
    let man = pou.manifold;
    man.validate_point(p)?;
    man.validate_point(q)?;
    if man.distance(p, q) <= 1e-12 {
        return domain("p and q must be two distinct points");
    }
    for x in k_grid {
        let to_p = man.minimal_directions(p, x)?;
        let to_q = man.minimal_directions(q, x)?;
        for a in &to_p {
            for b in &to_q {
                let th = angle(a, b)?;
                if th <= PI / 2.0 {
                    return domain(format!("obtuse-angle hypothesis fails at {:?} (angle {th})", x.as_slice()));
                }
            }
        }
    }
    let dp = DistanceFunction::new(man, p.clone())?;
    let dq = DistanceFunction::new(man, q.clone())?;
    let sp = smooth_function(&dp, pou, epsilon, quad)?;
    let sq = smooth_function(&dq, pou, epsilon, quad)?;
    let angles: Vec<Result<f64>> = k_grid.par_iter().map(|x| angle(&sp.gradient(x)?, &sq.gradient(x)?)).collect();
    let mut min_angle = f64::INFINITY;
    let mut worst_point = None;
    for (x, a) in k_grid.iter().zip(angles) {
        let a = a?;
        if a < min_angle {
            min_angle = a;
            worst_point = Some(x.clone());
        }
    }
    Ok(ObtuseReport { min_angle, holds: min_angle > PI / 2.0, worst_point })
}

/// Grid points where `|f_eps| <= tol`, in grid order.
pub fn zero_level_scan<F: LipschitzFunction + ?Sized>(sf: &SmoothedFunction<'_, F>, grid: &[DVector<f64>], tol: f64) -> Result<Vec<DVector<f64>>> {
    let vals: Vec<Result<f64>> = grid.par_iter().map(|q| sf.evaluate(q)).collect();
    let mut out = Vec::new();
    for (q, v) in grid.iter().zip(vals) {
        if v?.abs() <= tol {
            out.push(q.clone());
        }
    }
    Ok(out)
}

/// Nearest-point projection onto the unit sphere, restricted to the tubular
/// neighbourhood `|x| > 1/2`.
pub fn project_to_sphere(x: &DVector<f64>) -> Result<UnitVector> {
    let n = x.norm();
    if !(n > 0.5) {
        return domain(format!("point of norm {n} is outside tubular neighborhood |x| > 0.5"));
    }
    UnitVector::new(x / n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HullContainment {
    /// Largest epsilon found for which the containment holds.
    pub epsilon: f64,
    /// Distance from the smoothed gradient to the sampled hull at `epsilon`.
    pub distance: f64,
    pub eta: f64,
    pub steps: usize,
}

/// Bisection steps for [`hull_containment_epsilon`].
pub const BISECTION_STEPS: usize = 12;

/// For `d_p` on a flat manifold, bisects on `eps in (0, eps_max]` for the
/// largest value with `grad (d_p)_eps(x)` within `eta` of the sampled
/// generalized gradient at `x`. Parallel transport is the identity here.
pub fn hull_containment_epsilon(
    pou: &PartitionOfUnity,
    p: &DVector<f64>,
    x: &DVector<f64>,
    eta: f64,
    eps_max: f64,
    cfg: &SamplingConfig,
) -> Result<HullContainment> {
    if matches!(pou.manifold, ModelManifold::Sphere(_)) {
        return domain("hull containment needs a flat manifold (identity transport)");
    }
    let f = DistanceFunction::new(pou.manifold, p.clone())?;
    let gg = sample_generalized_gradient(&f, x, cfg)?;
    let dist = |eps: f64| -> Result<f64> {
        let sf = smooth_function(&f, pou, eps, QuadratureKind::TensorGauss)?;
        let g = sf.gradient(x)?;
        let shifted: Vec<DVector<f64>> = gg.samples.iter().map(|s| s - &g).collect();
        Ok(min_norm_in_hull(&shifted, 1e-9)?.distance)
    };
    let d = dist(eps_max)?;
    if d <= eta {
        return Ok(HullContainment { epsilon: eps_max, distance: d, eta, steps: 0 });
    }
    let (mut lo, mut hi) = (0.0, eps_max);
    let mut best = None;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let d = dist(mid)?;
        if d <= eta {
            lo = mid;
            best = Some(d);
        } else {
            hi = mid;
        }
    }
    match best {
        Some(distance) => Ok(HullContainment { epsilon: lo, distance, eta, steps: BISECTION_STEPS }),
        None => domain(format!("no epsilon in (0, {eps_max}] puts the smoothed gradient within {eta} of the hull")),
    }
}

/// Smallest singular value of `dF_eps` restricted to tangent directions,
/// over `grid`.
pub fn smoothed_rank_margin<F: LipschitzMap + ?Sized>(smf: &SmoothedMap<'_, F>, grid: &[DVector<f64>]) -> Result<f64> {
    let man = smf.pou().manifold;
    let vals: Vec<Result<f64>> = grid.par_iter().map(|q| Ok(min_singular_value(&(smf.differential(q)? * man.tangent_basis(q))))).collect();
    vals.into_iter().try_fold(f64::INFINITY, |acc, v| Ok(acc.min(v?)))
}
