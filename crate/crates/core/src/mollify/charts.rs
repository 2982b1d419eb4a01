//! Exponential charts and bump partitions of unity on the model manifolds.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Result};
use crate::geometry::item_rng;
use crate::manifolds::ModelManifold;
use rand::Rng;

/// An exponential chart `exp_c : B_radius(0) in R^dim -> M`. The partition
/// bump of the chart lives on the smaller ball of radius `bump_radius`.
#[derive(Clone, Debug)]
pub struct Chart {
    pub manifold: ModelManifold,
    pub center: DVector<f64>,
    pub radius: f64,
    pub bump_radius: f64,
    pub exp_lip: f64,
    /// Orthonormal frame of the tangent space at the center (ambient x dim).
    frame: DMatrix<f64>,
}

impl Chart {
    pub fn new(manifold: ModelManifold, center: DVector<f64>, radius: f64, bump_radius: f64) -> Result<Self> {
        manifold.validate_point(&center)?;
        if !(bump_radius > 0.0 && bump_radius < radius) {
            return domain(format!("bump radius {bump_radius} must lie in (0, {radius})"));
        }
        let limit = match manifold {
            ModelManifold::Sphere(_) => PI,
            ModelManifold::FlatTorus(_) => 0.5,
            ModelManifold::Euclidean(_) => f64::INFINITY,
        };
        if radius > limit {
            return domain(format!("chart radius {radius} exceeds the injectivity radius {limit}"));
        }
        let frame = manifold.tangent_basis(&center);
        // Flat charts are isometries; sphere charts contract (|J(t)| = sin t / t <= 1).
        Ok(Self { manifold, center, radius, bump_radius, exp_lip: 1.0, frame })
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn exp(&self, w: &DVector<f64>) -> DVector<f64> {
        self.manifold.exp(&self.center, &(&self.frame * w))
    }

    /// `exp(w - y)` for every node `y`.
    pub fn exp_shifted(&self, w: &DVector<f64>, nodes: &[DVector<f64>]) -> Vec<DVector<f64>> {
        if self.is_flat() {
            // Flat frames are the identity.
            let base = &self.center + w;
            nodes.iter().map(|y| &base - y).collect()
        } else {
            nodes.iter().map(|y| self.exp(&(w - y))).collect()
        }
    }

    /// Torus and Euclidean charts: `exp` is a translation.
    pub fn is_flat(&self) -> bool {
        !matches!(self.manifold, ModelManifold::Sphere(_))
    }

    pub fn log(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.frame.transpose() * self.manifold.log(&self.center, q)?)
    }

    /// Differential of `exp` at `w`: an `ambient x dim` matrix whose columns
    /// are tangent at `exp(w)`.
    pub fn dexp(&self, w: &DVector<f64>) -> DMatrix<f64> {
        match self.manifold {
            ModelManifold::Sphere(_) => {
                let v = &self.frame * w;
                let t = v.norm();
                if t < 1e-300 {
                    return self.frame.clone();
                }
                let u = &v / t;
                let (s, c) = t.sin_cos();
                // d/dv [c0 cos t + u sin t] along eta, with dt = <u, eta> and
                // du = (eta - u <u, eta>) / t.
                let radial = &u * c - &self.center * s;
                let mut out = DMatrix::zeros(self.center.len(), self.dim());
                for j in 0..self.dim() {
                    let eta = self.frame.column(j);
                    let dt = u.dot(&eta);
                    let col = &radial * dt + (eta - &u * dt) * (s / t);
                    out.set_column(j, &col);
                }
                out
            }
            _ => self.frame.clone(),
        }
    }

    /// Differential of `log` at `q`: a `dim x ambient` matrix acting on
    /// tangent vectors at `q` (the pseudo-inverse of `dexp`).
    pub fn dlog(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self.manifold {
            ModelManifold::Sphere(_) => {
                let d = self.dexp(&self.log(q)?);
                let gram = d.transpose() * &d;
                let inv = gram.try_inverse().ok_or_else(|| crate::Error::Domain("chart differential is singular".into()))?;
                Ok(inv * d.transpose())
            }
            _ => Ok(self.frame.transpose()),
        }
    }

    /// Largest `d(exp v, exp w) / |v - w|` over `pairs` seeded random pairs in
    /// the chart ball.
    pub fn sample_exp_lip(&self, pairs: usize, seed: u64) -> f64 {
        let n = self.dim();
        let mut rng = item_rng(seed, 0);
        let ball = |rng: &mut rand_chacha::ChaCha8Rng| {
            let dir = crate::geometry::UnitVector::random(n, rng).into_inner();
            let r: f64 = rng.random::<f64>().powf(1.0 / n as f64) * self.radius * (1.0 - 1e-9);
            dir * r
        };
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let (v, w) = (ball(&mut rng), ball(&mut rng));
            let d = (&v - &w).norm();
            if d > 0.0 {
                worst = worst.max(self.manifold.distance(&self.exp(&v), &self.exp(&w)) / d);
            }
        }
        worst
    }
}

/// `exp(1 - 1 / (1 - s^2))` for `s < 1`, and its derivative in `s`.
fn bump(s: f64) -> (f64, f64) {
    if s >= 1.0 {
        return (0.0, 0.0);
    }
    let a = 1.0 - s * s;
    let b = (1.0 - 1.0 / a).exp();
    (b, -b * 2.0 * s / (a * a))
}

/// Bumps on a finite chart cover, normalized by their sum.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    pub manifold: ModelManifold,
    pub charts: Vec<Chart>,
}

/// Nonzero partition members at a point.
#[derive(Clone, Debug)]
pub struct PouWeight {
    pub chart: usize,
    pub value: f64,
    /// Ambient tangent vector at the point.
    pub gradient: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PouReport {
    pub max_sum_deviation: f64,
    pub min_value: f64,
    pub max_value: f64,
    /// Every positive bump value sits inside its chart ball.
    pub supports_inside: bool,
    pub uncovered: usize,
}

impl PouReport {
    pub fn valid(&self) -> bool {
        self.max_sum_deviation <= 1e-9 && self.min_value >= 0.0 && self.max_value <= 1.0 && self.supports_inside && self.uncovered == 0
    }
}

impl PartitionOfUnity {
    pub fn new(manifold: ModelManifold, charts: Vec<Chart>) -> Result<Self> {
        if charts.is_empty() {
            return domain("a partition of unity needs at least one chart");
        }
        if charts.iter().any(|c| c.manifold != manifold) {
            return domain("all charts must live on the same manifold");
        }
        Ok(Self { manifold, charts })
    }

    /// `R^n / Z^n` (`n <= 3`) with charts centred on the `4^n` grid of spacing
    /// 1/4, bump radius 1/4 and chart radius 0.45.
    pub fn flat_torus(n: usize) -> Result<Self> {
        if n == 0 || n > 3 {
            return domain(format!("standard torus cover supports dimensions 1-3, got {n}"));
        }
        let man = ModelManifold::FlatTorus(n);
        let charts = crate::manifolds::torus_grid(n, 4)
            .into_iter()
            .map(|c| Chart::new(man, c, 0.45, 0.25))
            .collect::<Result<Vec<_>>>()?;
        Self::new(man, charts)
    }

    /// `S^2` with charts at the 12 icosahedron vertices, bump radius 0.85 and
    /// chart radius 1.
    pub fn sphere_icosahedral() -> Result<Self> {
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        let mut centers = Vec::with_capacity(12);
        for a in [-1.0, 1.0] {
            for b in [-g, g] {
                for perm in 0..3 {
                    let mut v = [0.0; 3];
                    v[perm] = 0.0;
                    v[(perm + 1) % 3] = a;
                    v[(perm + 2) % 3] = b;
                    centers.push(DVector::from_column_slice(&v).normalize());
                }
            }
        }
        let man = ModelManifold::Sphere(2);
        let charts = centers.into_iter().map(|c| Chart::new(man, c, 1.0, 0.85)).collect::<Result<Vec<_>>>()?;
        Self::new(man, charts)
    }

    /// `S^n` with charts at `+-e_i`. Every point is within
    /// `arccos(1/sqrt(n+1))` of one of them.
    pub fn sphere_axes(n: usize) -> Result<Self> {
        let man = ModelManifold::Sphere(n);
        let bump_radius = (1.0 / ((n + 1) as f64).sqrt()).acos() + 0.15;
        let radius = (bump_radius + 0.2).min(PI - 0.1);
        let mut charts = Vec::with_capacity(2 * (n + 1));
        for i in 0..=n {
            for s in [1.0, -1.0] {
                let mut c = DVector::zeros(n + 1);
                c[i] = s;
                charts.push(Chart::new(man, c, radius, bump_radius)?);
            }
        }
        Self::new(man, charts)
    }

    /// A single chart on `R^n` whose bump is positive on `B_R(center)`.
    pub fn euclidean(n: usize, center: DVector<f64>, reach: f64) -> Result<Self> {
        let man = ModelManifold::Euclidean(n);
        Self::new(man, vec![Chart::new(man, center, f64::INFINITY, reach)?])
    }

    /// Normalized weights `psi_i(q)` with their gradients; empty when `q` is
    /// not covered.
    pub fn weights(&self, q: &DVector<f64>) -> Vec<PouWeight> {
        let mut raw = Vec::new();
        for (i, c) in self.charts.iter().enumerate() {
            let d = self.manifold.distance(&c.center, q);
            if d >= c.bump_radius {
                continue;
            }
            let (b, db) = bump(d / c.bump_radius);
            if b <= 0.0 {
                continue;
            }
            // grad d_c(q) = -log_q(c) / |log_q(c)|; zero at the center where
            // the bump is flat anyway.
            let grad = match self.manifold.log(q, &c.center) {
                Ok(w) if w.norm() > 0.0 => -&w / w.norm() * (db / c.bump_radius),
                _ => DVector::zeros(q.len()),
            };
            raw.push((i, b, grad));
        }
        let total: f64 = raw.iter().map(|r| r.1).sum();
        let total_grad: DVector<f64> = raw.iter().fold(DVector::zeros(q.len()), |acc, r| acc + &r.2);
        raw.into_iter()
            .map(|(i, b, g)| PouWeight { chart: i, value: b / total, gradient: (g * total - &total_grad * b) / (total * total) })
            .collect()
    }

    /// Checks `sum psi_i = 1`, `0 <= psi_i <= 1` and support containment on `grid`.
    pub fn verify(&self, grid: &[DVector<f64>]) -> PouReport {
        let mut rep = PouReport { max_sum_deviation: 0.0, min_value: 1.0, max_value: 0.0, supports_inside: true, uncovered: 0 };
        for q in grid {
            let w = self.weights(q);
            if w.is_empty() {
                rep.uncovered += 1;
                continue;
            }
            let sum: f64 = w.iter().map(|x| x.value).sum();
            rep.max_sum_deviation = rep.max_sum_deviation.max((sum - 1.0).abs());
            for x in &w {
                rep.min_value = rep.min_value.min(x.value);
                rep.max_value = rep.max_value.max(x.value);
                let c = &self.charts[x.chart];
                if self.manifold.distance(&c.center, q) >= c.radius {
                    rep.supports_inside = false;
                }
            }
        }
        rep
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{sphere_polar_grid, torus_grid};
    use approx::assert_abs_diff_eq;

    #[test]
    fn chart_round_trip() {
        for pou in [PartitionOfUnity::flat_torus(2).unwrap(), PartitionOfUnity::sphere_icosahedral().unwrap()] {
            let n = pou.manifold.dim();
            let mut rng = item_rng(3, 0);
            for c in &pou.charts {
                for _ in 0..20 {
                    let v = crate::geometry::UnitVector::random(n, &mut rng).into_inner() * (rng.random::<f64>() * c.radius * 0.999);
                    assert_abs_diff_eq!(c.log(&c.exp(&v)).unwrap(), v, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn dexp_matches_finite_differences() {
        let pou = PartitionOfUnity::sphere_icosahedral().unwrap();
        let c = &pou.charts[5];
        let w = DVector::from_column_slice(&[0.4, -0.3]);
        let d = c.dexp(&w);
        let h = 1e-6;
        for j in 0..2 {
            let mut e = DVector::zeros(2);
            e[j] = h;
            let fd = (c.exp(&(&w + &e)) - c.exp(&(&w - &e))) / (2.0 * h);
            assert_abs_diff_eq!(d.column(j).into_owned(), fd, epsilon = 1e-8);
        }
        let dl = c.dlog(&c.exp(&w)).unwrap();
        assert_abs_diff_eq!(dl * d, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn sphere_chart_lipschitz_constant_is_one() {
        let pou = PartitionOfUnity::sphere_icosahedral().unwrap();
        let lip = pou.charts[0].sample_exp_lip(10_000, 1);
        assert!(lip <= 1.0 + 1e-6 && lip > 0.9, "{lip}");
    }

    #[test]
    fn standard_partitions_are_valid() {
        let t = PartitionOfUnity::flat_torus(2).unwrap();
        assert!(t.verify(&torus_grid(2, 64)).valid());
        let s = PartitionOfUnity::sphere_icosahedral().unwrap();
        assert!(s.verify(&sphere_polar_grid(64, 64)).valid());
        let s3 = PartitionOfUnity::sphere_axes(3).unwrap();
        assert!(s3.verify(&crate::manifolds::sphere_random_points(3, 2000, 4)).valid());
    }

    #[test]
    fn weight_gradients_match_finite_differences() {
        let t = PartitionOfUnity::flat_torus(2).unwrap();
        let q = DVector::from_column_slice(&[0.37, 0.11]);
        let h = 1e-6;
        for w in t.weights(&q) {
            for j in 0..2 {
                let mut e = DVector::zeros(2);
                e[j] = h;
                let val = |p: &DVector<f64>| t.weights(p).into_iter().find(|x| x.chart == w.chart).map_or(0.0, |x| x.value);
                let fd = (val(&(&q + &e)) - val(&(&q - &e))) / (2.0 * h);
                assert_abs_diff_eq!(w.gradient[j], fd, epsilon = 1e-7);
            }
        }
    }
}
