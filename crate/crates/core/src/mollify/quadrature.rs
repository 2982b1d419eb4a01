//! The mollifier density and quadrature rules for integrating against it.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{domain, Result};
use crate::geometry::item_rng;
use crate::manifolds::unit_direction_set;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule on `[a, b]`.
pub fn composite_gauss(a: f64, b: f64, panels: usize, per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(per_panel);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * per_panel);
    let mut weights = Vec::with_capacity(panels * per_panel);
    for p in 0..panels {
        let lo = a + h * p as f64;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(lo + 0.5 * h * (xi + 1.0));
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

/// Area of the unit sphere `S^{d-1}` in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (d - 2) as f64 * sphere_area(d - 2),
    }
}

/// Unnormalized radial profile `exp(1 / (s^2 - 1))` for `s = |y| / eps < 1`.
fn profile(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 / (s * s - 1.0)).exp()
    }
}

pub const MAX_DIM: usize = 5;

/// Normalized bump `rho_eps` on `R^dim`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mollifier {
    pub epsilon: f64,
    pub dim: usize,
    pub normalizer: f64,
}

impl Mollifier {
    pub fn new(dim: usize, epsilon: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return domain(format!("mollifier dimension must be in 1..={MAX_DIM}, got {dim}"));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return domain(format!("epsilon must be positive, got {epsilon}"));
        }
        // High-resolution radial integral of s^{d-1} profile(s) on [0, 1].
        let (r, w) = composite_gauss(0.0, 1.0, 400, 32);
        let radial: f64 = r.iter().zip(&w).map(|(s, wi)| wi * s.powi(dim as i32 - 1) * profile(*s)).sum();
        let mass = sphere_area(dim) * radial * epsilon.powi(dim as i32);
        Ok(Self { epsilon, dim, normalizer: 1.0 / mass })
    }

    pub fn density_at_radius(&self, r: f64) -> f64 {
        self.normalizer * profile(r / self.epsilon)
    }
}

pub fn mollifier_density(m: &Mollifier, y: &DVector<f64>) -> f64 {
    m.density_at_radius(y.norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureKind {
    /// Radial composite Gauss-Legendre times a product angular rule (dims 1-3).
    TensorGauss,
    /// Radial Gauss-Legendre times `count` seeded random directions in
    /// antipodal pairs.
    MonteCarlo { count: usize, seed: u64 },
}

impl QuadratureKind {
    /// Tensor rule up to dimension 3, 2e5-point Monte Carlo above.
    pub fn default_for(dim: usize) -> Self {
        if dim <= 3 {
            Self::TensorGauss
        } else {
            Self::MonteCarlo { count: 200_000, seed: 0 }
        }
    }
}

const RADIAL_PANELS: usize = 4;
const RADIAL_PER_PANEL: usize = 16;
const AZIMUTHS: usize = 32;
const POLAR_NODES: usize = 16;

/// Nodes `y_k` in the `eps`-ball and positive weights with `sum w_k g(y_k)`
/// approximating `int g(y) rho_eps(y) dy`. Weights are rescaled to sum to one
/// so that constants are reproduced exactly; `raw_mass` keeps the
/// unrescaled quadrature of `rho_eps`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub dim: usize,
    pub nodes: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub raw_mass: f64,
}

impl QuadratureRule {
    pub fn new(m: &Mollifier, kind: QuadratureKind) -> Result<Self> {
        let d = m.dim;
        // Directions with weights summing to the sphere area.
        let dirs: Vec<(DVector<f64>, f64)> = match kind {
            QuadratureKind::TensorGauss => match d {
                1 => vec![(DVector::from_element(1, 1.0), 1.0), (DVector::from_element(1, -1.0), 1.0)],
                2 => unit_direction_set(2, AZIMUTHS, 0).into_iter().map(|v| (v, 2.0 * PI / AZIMUTHS as f64)).collect(),
                3 => {
                    let (z, wz) = gauss_legendre(POLAR_NODES);
                    let mut out = Vec::with_capacity(POLAR_NODES * AZIMUTHS);
                    for (zi, wi) in z.iter().zip(&wz) {
                        let s = (1.0 - zi * zi).sqrt();
                        for j in 0..AZIMUTHS {
                            let ph = 2.0 * PI * j as f64 / AZIMUTHS as f64;
                            out.push((DVector::from_column_slice(&[s * ph.cos(), s * ph.sin(), *zi]), wi * 2.0 * PI / AZIMUTHS as f64));
                        }
                    }
                    out
                }
                _ => return domain(format!("tensor quadrature supports dimensions 1-3, got {d}")),
            },
            QuadratureKind::MonteCarlo { count, seed } => {
                let pairs = (count / (2 * RADIAL_PANELS * RADIAL_PER_PANEL)).max(1);
                let mut rng = item_rng(seed, d as u64);
                let a = sphere_area(d) / (2 * pairs) as f64;
                let mut out = Vec::with_capacity(2 * pairs);
                while out.len() < 2 * pairs {
                    let g = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                    let n: f64 = g.norm();
                    if n > 0.0 {
                        let u = g / n;
                        out.push((-&u, a));
                        out.push((u, a));
                    }
                }
                out
            }
        };
        let (r, wr) = composite_gauss(0.0, m.epsilon, RADIAL_PANELS, RADIAL_PER_PANEL);
        let mut nodes = Vec::with_capacity(r.len() * dirs.len());
        let mut weights = Vec::with_capacity(r.len() * dirs.len());
        for (ri, wi) in r.iter().zip(&wr) {
            let radial = wi * ri.powi(d as i32 - 1) * m.density_at_radius(*ri);
            for (u, a) in &dirs {
                nodes.push(u * *ri);
                weights.push(radial * a);
            }
        }
        let raw_mass: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= raw_mass);
        Ok(Self { kind, dim: d, nodes, weights, raw_mass })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_is_exact_to_degree_2n_minus_1() {
        let (x, w) = gauss_legendre(16);
        for k in 0..32 {
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k + 1) as f64 };
            assert_abs_diff_eq!(q, exact, epsilon = 1e-14);
        }
    }

    #[test]
    fn density_examples() {
        let m = Mollifier::new(1, 1.0).unwrap();
        assert_eq!(mollifier_density(&m, &DVector::from_element(1, 1.0)), 0.0);
        assert_eq!(mollifier_density(&m, &DVector::from_element(1, -2.5)), 0.0);
        assert_abs_diff_eq!(mollifier_density(&m, &DVector::from_element(1, 0.0)), m.normalizer * (-1f64).exp(), epsilon = 1e-15);
        let m3 = Mollifier::new(3, 0.2).unwrap();
        let y = DVector::from_column_slice(&[0.1, -0.05, 0.02]);
        let z = DVector::from_column_slice(&[-0.02, 0.1, 0.05]);
        assert_abs_diff_eq!(mollifier_density(&m3, &y), mollifier_density(&m3, &z), epsilon = 1e-12);
    }

    #[test]
    fn polar_oracle_mass_in_the_plane() {
        // Independent oracle: midpoint rule on a 4000 x 1 polar grid (the
        // angular integral of a radial function is exactly 2 pi).
        let m = Mollifier::new(2, 0.1).unwrap();
        let n = 4000;
        let h = 0.1 / n as f64;
        let mass: f64 = (0..n).map(|i| {
            let r = (i as f64 + 0.5) * h;
            2.0 * PI * r * m.density_at_radius(r) * h
        }).sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn tensor_rules_integrate_the_density_to_one() {
        for d in 1..=3 {
            for eps in [0.01, 0.05, 0.1] {
                let m = Mollifier::new(d, eps).unwrap();
                let q = QuadratureRule::new(&m, QuadratureKind::TensorGauss).unwrap();
                assert!((q.raw_mass - 1.0).abs() <= 1e-8, "d = {d}, eps = {eps}: {}", q.raw_mass);
                assert!(q.nodes.iter().all(|y| y.norm() < eps));
            }
        }
    }

    #[test]
    fn monte_carlo_rules_integrate_the_density_to_one() {
        for d in 4..=5 {
            let m = Mollifier::new(d, 0.05).unwrap();
            let q = QuadratureRule::new(&m, QuadratureKind::default_for(d)).unwrap();
            assert!((q.raw_mass - 1.0).abs() <= 1e-4, "d = {d}: {}", q.raw_mass);
            // Antipodal pairing kills every odd moment.
            let mean: DVector<f64> = q.nodes.iter().zip(&q.weights).map(|(y, w)| y * *w).sum();
            assert!(mean.norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_unsupported_dimensions() {
        assert!(Mollifier::new(6, 0.1).is_err());
        assert!(Mollifier::new(0, 0.1).is_err());
        assert!(Mollifier::new(2, 0.0).is_err());
        let m = Mollifier::new(4, 0.1).unwrap();
        assert!(QuadratureRule::new(&m, QuadratureKind::TensorGauss).is_err());
    }
}
