//! Model manifolds with exact distance and minimal-geodesic oracles, and
//! criticality / bisector scans for distance functions on them.
//!
//! Points are stored in ambient coordinates: `S^n` sits in `R^{n+1}`, the flat
//! torus `R^n / Z^n` uses any real representative, Euclidean space is itself.
//! Tangent vectors are ambient vectors as well (tangent to the sphere at the
//! base point).

use std::f64::consts::PI;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::clarke::LipschitzFunction;
use crate::error::{domain, Result};
use crate::geometry::{angle, complement_basis, item_rng, min_norm_in_hull};

/// Tie tolerance for equal-length lattice lifts on the torus.
pub const TIE_TOL: f64 = 1e-9;
/// Directions used to discretize the full tangent sphere at an antipode.
pub const DEFAULT_ANTIPODAL_COUNT: usize = 64;
/// Tangent directions probed by the angle form of the criticality test.
pub const ANGLE_TEST_DIRECTIONS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelManifold {
    /// Unit sphere `S^n` in `R^{n+1}`.
    Sphere(usize),
    /// `R^n / Z^n` with the flat metric.
    FlatTorus(usize),
    /// `R^n`; a single global chart.
    Euclidean(usize),
}

/// Wraps into `[-1/2, 1/2)`.
fn wrap(t: f64) -> f64 {
    t - (t + 0.5).floor()
}

impl ModelManifold {
    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match *self {
            Self::Sphere(n) | Self::FlatTorus(n) | Self::Euclidean(n) => n,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match *self {
            Self::Sphere(n) => n + 1,
            Self::FlatTorus(n) | Self::Euclidean(n) => n,
        }
    }

    /// Checks shape and, for the sphere, unit norm within `1e-9`.
    pub fn validate_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return domain(format!("point of length {} on a manifold in R^{}", x.len(), self.ambient_dim()));
        }
        if x.iter().any(|c| !c.is_finite()) {
            return domain("point has non-finite coordinates");
        }
        if let Self::Sphere(_) = self {
            if (x.norm() - 1.0).abs() > 1e-9 {
                return domain(format!("point of norm {} is not on the unit sphere", x.norm()));
            }
        }
        Ok(())
    }

    /// Geodesic distance.
    pub fn distance(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match self {
            Self::Sphere(_) => {
                // Half-chord form: accurate near 0 and pi, unlike a bare arccos.
                let (mut dm, mut dp) = (0.0, 0.0);
                for (a, b) in x.iter().zip(y.iter()) {
                    dm += (a - b) * (a - b);
                    dp += (a + b) * (a + b);
                }
                2.0 * dm.sqrt().atan2(dp.sqrt())
            }
            Self::FlatTorus(_) => x.iter().zip(y.iter()).map(|(a, b)| wrap(b - a).powi(2)).sum::<f64>().sqrt(),
            Self::Euclidean(_) => (x - y).norm(),
        }
    }

    /// `exp_x(v)`.
    pub fn exp(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Sphere(_) => {
                let t = v.norm();
                if t == 0.0 {
                    return x.clone();
                }
                let y = x * t.cos() + v * (t.sin() / t);
                let n = y.norm();
                y / n
            }
            Self::FlatTorus(_) | Self::Euclidean(_) => x + v,
        }
    }

    /// `exp_x^{-1}(y)`: the shortest tangent vector reaching `y`. Undefined
    /// (domain error) at the sphere antipode; on the torus an arbitrary
    /// minimizing lift is used at ties.
    pub fn log(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Self::Sphere(_) => {
                let c = x.dot(y);
                let w = y - x * c;
                let s = w.norm();
                if s == 0.0 {
                    if c > 0.0 {
                        return Ok(DVector::zeros(x.len()));
                    }
                    return domain("log is undefined at the antipode");
                }
                Ok(w * (s.atan2(c) / s))
            }
            Self::FlatTorus(_) => Ok(DVector::from_iterator(x.len(), x.iter().zip(y.iter()).map(|(a, b)| wrap(b - a)))),
            Self::Euclidean(_) => Ok(y - x),
        }
    }

    /// Orthonormal basis of `T_x M` as columns of an `ambient x dim` matrix.
    pub fn tangent_basis(&self, x: &DVector<f64>) -> nalgebra::DMatrix<f64> {
        match self {
            Self::Sphere(_) => complement_basis(x),
            Self::FlatTorus(n) | Self::Euclidean(n) => nalgebra::DMatrix::identity(*n, *n),
        }
    }

    /// Unit initial velocities at `x` of all minimal geodesics from `x` to `p`.
    pub fn minimal_directions(&self, p: &DVector<f64>, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        self.minimal_directions_with(p, x, DEFAULT_ANTIPODAL_COUNT)
    }

    /// As [`Self::minimal_directions`], with `antipodal_count` directions
    /// standing in for the full tangent sphere at a sphere antipode.
    pub fn minimal_directions_with(
        &self,
        p: &DVector<f64>,
        x: &DVector<f64>,
        antipodal_count: usize,
    ) -> Result<Vec<DVector<f64>>> {
        self.validate_point(p)?;
        self.validate_point(x)?;
        if self.distance(p, x) <= 1e-12 {
            return domain("minimal directions requested at the base point itself");
        }
        match self {
            Self::Sphere(n) => {
                let w = p - x * x.dot(p);
                let s = w.norm();
                if s <= 1e-12 && x.dot(p) < 0.0 {
                    let basis = complement_basis(x);
                    return Ok(unit_direction_set(*n, antipodal_count, 0).iter().map(|d| &basis * d).collect());
                }
                Ok(vec![w / s])
            }
            Self::FlatTorus(n) => {
                // |d + k|^2 separates over coordinates, so the minimizing lifts
                // are the product of per-coordinate minimizer sets.
                let mut per_axis: Vec<Vec<f64>> = Vec::with_capacity(*n);
                for i in 0..*n {
                    let d = wrap(p[i] - x[i]);
                    let cands = [d - 1.0, d, d + 1.0];
                    let best = cands.iter().map(|c| c.abs()).fold(f64::INFINITY, f64::min);
                    per_axis.push(cands.iter().copied().filter(|c| c.abs() <= best + TIE_TOL).collect());
                }
                let mut lifts: Vec<Vec<f64>> = vec![vec![]];
                for axis in &per_axis {
                    lifts = lifts.into_iter().flat_map(|l| axis.iter().map(move |c| [l.clone(), vec![*c]].concat())).collect();
                }
                Ok(lifts
                    .into_iter()
                    .map(|l| {
                        let v = DVector::from_vec(l);
                        let norm = v.norm();
                        v / norm
                    })
                    .collect())
            }
            Self::Euclidean(_) => {
                let d = p - x;
                let norm = d.norm();
                Ok(vec![d / norm])
            }
        }
    }
}

/// `count` unit vectors in `R^dim` spread over the sphere: equally spaced on
/// the circle, a Fibonacci lattice on `S^2`, and signed basis vectors plus
/// seeded Gaussian directions beyond that.
pub fn unit_direction_set(dim: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    match dim {
        0 => vec![],
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / count as f64;
                DVector::from_column_slice(&[t.cos(), t.sin()])
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - (2 * i + 1) as f64 / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    DVector::from_column_slice(&[r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut out = Vec::with_capacity(count.max(2 * dim));
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut e = DVector::zeros(dim);
                    e[i] = s;
                    out.push(e);
                }
            }
            let mut rng = item_rng(seed, dim as u64);
            while out.len() < count {
                let g = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                let n: f64 = g.norm();
                if n > 0.0 {
                    out.push(g / n);
                }
            }
            out
        }
    }
}

/// Verdict of the criticality test for `d_p` at `point`.
#[derive(Clone, Debug, PartialEq)]
pub struct CritReport {
    pub point: DVector<f64>,
    pub critical: bool,
    /// Distance from the origin to the hull of gradient directions.
    pub margin: f64,
    /// Gradient directions of `d_p` at `point` (reversed minimal directions).
    pub directions_used: Vec<DVector<f64>>,
    /// `min_v max_gamma <v, gamma'(0)>` over a grid of tangent directions `v`;
    /// non-negative exactly for the angle form of criticality.
    pub angle_separation: f64,
    /// Whether the hull test and the angle test reach the same verdict.
    pub tests_agree: bool,
}

/// Clarke / Grove-Shiohama criticality of `d_p` at `x`.
pub fn gs_critical(man: &ModelManifold, p: &DVector<f64>, x: &DVector<f64>, tol: f64) -> Result<CritReport> {
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let minimal = man.minimal_directions(p, x)?;
    let grads: Vec<DVector<f64>> = minimal.iter().map(|d| -d).collect();
    let hull = min_norm_in_hull(&grads, tol * 1e-3)?;
    let critical = hull.distance <= tol;

    let basis = man.tangent_basis(x);
    let probes = unit_direction_set(man.dim(), ANGLE_TEST_DIRECTIONS, 0);
    let angle_separation = probes
        .iter()
        .map(|d| {
            let v = &basis * d;
            minimal.iter().map(|g| v.dot(g)).fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min);
    let tests_agree = critical == (angle_separation >= -tol);
    Ok(CritReport { point: x.clone(), critical, margin: hull.distance, directions_used: grads, angle_separation, tests_agree })
}

/// Runs [`gs_critical`] over `grid`, skipping points within `10 tol` of `p`,
/// and returns the critical ones in grid order.
pub fn crit_scan(man: &ModelManifold, p: &DVector<f64>, grid: &[DVector<f64>], tol: f64) -> Result<Vec<CritReport>> {
    let reports: Vec<Result<Option<CritReport>>> = grid
        .par_iter()
        .map(|x| {
            if man.distance(p, x) <= 10.0 * tol {
                return Ok(None);
            }
            gs_critical(man, p, x, tol).map(|r| r.critical.then_some(r))
        })
        .collect();
    let mut out = Vec::new();
    for r in reports {
        if let Some(c) = r? {
            out.push(c);
        }
    }
    Ok(out)
}

/// Which side of the bisector of `p` and `q` a point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `d_p < d_q`.
    NearP,
    /// `d_q < d_p`.
    NearQ,
    /// `|d_p - d_q| <= tol`.
    Bisector,
}

pub fn classify(man: &ModelManifold, p: &DVector<f64>, q: &DVector<f64>, x: &DVector<f64>, tol: f64) -> Side {
    let diff = man.distance(p, x) - man.distance(q, x);
    if diff.abs() <= tol {
        Side::Bisector
    } else if diff < 0.0 {
        Side::NearP
    } else {
        Side::NearQ
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BisectorSample {
    pub points: Vec<DVector<f64>>,
    pub tol: f64,
}

fn distinct(man: &ModelManifold, p: &DVector<f64>, q: &DVector<f64>) -> Result<()> {
    man.validate_point(p)?;
    man.validate_point(q)?;
    if man.distance(p, q) <= 1e-12 {
        return domain("p and q must be distinct points");
    }
    Ok(())
}

/// Grid points with `|d_p - d_q| <= tol`.
pub fn bisector_sample(
    man: &ModelManifold,
    p: &DVector<f64>,
    q: &DVector<f64>,
    grid: &[DVector<f64>],
    tol: f64,
) -> Result<BisectorSample> {
    distinct(man, p, q)?;
    if !(tol >= 0.0) {
        return domain(format!("tolerance must be non-negative, got {tol}"));
    }
    let points = grid.iter().filter(|x| classify(man, p, q, x, tol) == Side::Bisector).cloned().collect();
    Ok(BisectorSample { points, tol })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    /// `"1.8"` or `"1.9"`.
    pub condition: &'static str,
    pub point: DVector<f64>,
    /// Hull margin for critical-point witnesses, angle for bisector witnesses.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwistedReport {
    /// No critical point of `d_p` in `D(p)` and none of `d_q` in `D(q)`.
    pub cond_18: bool,
    /// Every pair of minimal directions to `p` and `q` from a bisector point
    /// makes an angle greater than `pi/2`.
    pub cond_19: bool,
    /// Smallest such angle; `+inf` when the bisector sample is empty.
    pub worst_angle: f64,
    pub bisector_points: usize,
    /// Smallest hull margin of `d_p` over `D(p)` and of `d_q` over `D(q)`,
    /// minus `tol`; negative exactly when a critical witness was found.
    /// `+inf` when both regions are empty.
    pub crit_margin: f64,
    pub witnesses: Vec<Witness>,
}

/// Twisted-sphere hypotheses on a grid. `tol` serves both as criticality
/// tolerance and as bisector width.
pub fn twisted_conditions_check(
    man: &ModelManifold,
    p: &DVector<f64>,
    q: &DVector<f64>,
    grid: &[DVector<f64>],
    tol: f64,
) -> Result<TwistedReport> {
    distinct(man, p, q)?;
    let mut witnesses = Vec::new();
    let mut crit_margin = f64::INFINITY;
    for (a, side) in [(p, Side::NearP), (q, Side::NearQ)] {
        // Same exclusion as crit_scan, but every margin is kept.
        let region: Vec<&DVector<f64>> = grid
            .iter()
            .filter(|x| classify(man, p, q, x, tol) == side && man.distance(a, x) > 10.0 * tol)
            .collect();
        let reports: Vec<Result<CritReport>> = region.par_iter().map(|x| gs_critical(man, a, x, tol)).collect();
        for r in reports {
            let r = r?;
            crit_margin = crit_margin.min(r.margin - tol);
            if r.critical {
                witnesses.push(Witness { condition: "1.8", point: r.point, value: r.margin });
            }
        }
    }
    let cond_18 = witnesses.is_empty();

    let bis = bisector_sample(man, p, q, grid, tol)?;
    let angles: Vec<Result<f64>> = bis
        .points
        .par_iter()
        .map(|x| {
            let to_p = man.minimal_directions(p, x)?;
            let to_q = man.minimal_directions(q, x)?;
            let mut worst = f64::INFINITY;
            for a in &to_p {
                for b in &to_q {
                    worst = worst.min(angle(a, b)?);
                }
            }
            Ok(worst)
        })
        .collect();
    let mut worst_angle = f64::INFINITY;
    let mut cond_19 = true;
    for (x, a) in bis.points.iter().zip(angles) {
        let a = a?;
        worst_angle = worst_angle.min(a);
        if a <= PI / 2.0 {
            cond_19 = false;
            witnesses.push(Witness { condition: "1.9", point: x.clone(), value: a });
        }
    }
    Ok(TwistedReport { cond_18, cond_19, worst_angle, bisector_points: bis.points.len(), crit_margin, witnesses })
}

/// Geodesic-polar grid on `S^2`: `rows + 1` colatitudes `k pi / rows`
/// (poles included once) times `cols` longitudes.
pub fn sphere_polar_grid(rows: usize, cols: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity((rows + 1) * cols);
    for k in 0..=rows {
        let th = PI * k as f64 / rows as f64;
        if k == 0 || k == rows {
            out.push(DVector::from_column_slice(&[0.0, 0.0, th.cos().signum()]));
            continue;
        }
        for j in 0..cols {
            let ph = 2.0 * PI * j as f64 / cols as f64;
            out.push(DVector::from_column_slice(&[th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]));
        }
    }
    out
}

/// Polar grid restricted to latitudes in `[-band, band]`.
pub fn sphere_band_grid(rows: usize, cols: usize, band: f64) -> Vec<DVector<f64>> {
    (0..=rows)
        .flat_map(|k| {
            let lat = -band + 2.0 * band * k as f64 / rows.max(1) as f64;
            (0..cols).map(move |j| {
                let ph = 2.0 * PI * j as f64 / cols as f64;
                DVector::from_column_slice(&[lat.cos() * ph.cos(), lat.cos() * ph.sin(), lat.sin()])
            })
        })
        .collect()
}

/// Uniform grid `{(i_1, .., i_n) / per_axis}` of the torus fundamental domain.
pub fn torus_grid(n: usize, per_axis: usize) -> Vec<DVector<f64>> {
    let total = per_axis.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            DVector::from_fn(n, |_, _| {
                let i = idx % per_axis;
                idx /= per_axis;
                i as f64 / per_axis as f64
            })
        })
        .collect()
}

/// Seeded uniform points on `S^n`.
pub fn sphere_random_points(n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = item_rng(seed, i as u64);
            crate::geometry::UnitVector::random(n + 1, &mut rng).into_inner()
        })
        .collect()
}

/// `d_p` as a Lipschitz oracle in ambient coordinates. The gradient is the
/// reversed minimal direction where that direction is unique.
#[derive(Clone, Debug)]
pub struct DistanceFunction {
    pub manifold: ModelManifold,
    pub p: DVector<f64>,
}

impl DistanceFunction {
    pub fn new(manifold: ModelManifold, p: DVector<f64>) -> Result<Self> {
        manifold.validate_point(&p)?;
        Ok(Self { manifold, p })
    }
}

impl LipschitzFunction for DistanceFunction {
    fn dim(&self) -> usize {
        self.manifold.ambient_dim()
    }
    fn eval(&self, x: &DVector<f64>) -> f64 {
        self.manifold.distance(&self.p, x)
    }
    fn gradient_ae(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        match self.manifold {
            ModelManifold::FlatTorus(_) => {
                // Unique nearest lift unless some coordinate sits at a half-period tie.
                let mut d = DVector::from_iterator(x.len(), x.iter().zip(self.p.iter()).map(|(a, b)| wrap(a - b)));
                if d.iter().any(|c| (c.abs() - 0.5).abs() <= TIE_TOL) {
                    return None;
                }
                let n = d.norm();
                (n > 0.0).then(|| {
                    d /= n;
                    d
                })
            }
            _ => {
                let dirs = self.manifold.minimal_directions_with(&self.p, x, 2).ok()?;
                (dirs.len() == 1).then(|| -&dirs[0])
            }
        }
    }
    fn lip_bound(&self) -> f64 {
        1.0
    }
}
