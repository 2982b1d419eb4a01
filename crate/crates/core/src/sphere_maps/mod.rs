//! Smooth self-maps `sigma` of `S^{n-1}`, the curves `c = sigma o gamma` along
//! great circles, and checkers for the curvature / bi-Lipschitz conditions
//! under which the radial extension of `sigma` is non-singular at the origin.

mod extension;

pub use extension::{
    a_v_matrix, extension_bilip_check, extension_nonsingularity_margin, radial_extension_eval, ExtensionBilipReport,
    ExtensionMargin,
};

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::geometry::{angle, complement_basis, item_rng, GeodesicSegment, UnitVector};

/// Default grid step along geodesics.
pub const DEFAULT_STEP: f64 = PI / 512.0;

/// `K = (sqrt 2 - 1) / (2 (e^pi - 1))`.
pub fn k_constant() -> f64 {
    (2f64.sqrt() - 1.0) / (2.0 * (PI.exp() - 1.0))
}

/// `e^{-pi} (1 - 1/sqrt 2)`: the bound on the alpha-integral.
pub fn alpha_threshold() -> f64 {
    (-PI).exp() * (1.0 - FRAC_1_SQRT_2)
}

/// `((8/pi)(n-1))^{-1/2}`: allowed excess of `Lip^b(sigma)^2` over one.
pub fn dimension_threshold(n: usize) -> f64 {
    (8.0 / PI * (n as f64 - 1.0)).powf(-0.5)
}

/// Smooth odd height profiles for the latitude twist.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// `phi(z) = z`.
    Linear,
    /// `phi(z) = sin z`.
    Sine,
    /// `phi(z) = z^3`.
    Cubic,
}

impl Profile {
    /// `(phi, phi', phi'')` at `z`.
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        match self {
            Self::Linear => (z, 1.0, 0.0),
            Self::Sine => (z.sin(), z.cos(), -z.sin()),
            Self::Cubic => (z * z * z, 3.0 * z * z, 6.0 * z),
        }
    }
}

/// Tangent vector fields for the normalized perturbation `x + a V(x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum TangentField {
    /// `V(x) = B x - <B x, x> x`.
    Linear(DMatrix<f64>),
}

impl TangentField {
    /// Linear field with standard Gaussian `B / sqrt(n)`.
    pub fn random_linear(n: usize, seed: u64) -> Self {
        let mut rng = item_rng(seed, n as u64);
        let s = (n as f64).sqrt();
        Self::Linear(DMatrix::from_fn(n, n, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g / s
        }))
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Linear(b) => {
                let bx = b * x;
                let r = bx.dot(x);
                bx - x * r
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SphereFamily {
    Identity,
    Rotation(DMatrix<f64>),
    /// Rotation of the first two coordinates by `amplitude * phi(x_n)`.
    LatitudeTwist { profile: Profile, amplitude: f64 },
    /// `(x + a V(x)) / |x + a V(x)|`.
    NormalizedPerturbation { field: TangentField, amplitude: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

/// A self-map of `S^{n-1}`, `n` being the ambient dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereMap {
    pub n: usize,
    pub family: SphereFamily,
    /// Step of the central differences used in finite-difference mode.
    pub fd_step: f64,
}

/// `J x`: quarter turn in the first coordinate plane.
fn quarter_turn(x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(x.len());
    out[0] = -x[1];
    out[1] = x[0];
    out
}

/// Rotation by `theta` in the first coordinate plane.
fn plane_rotation(theta: f64, x: &DVector<f64>) -> DVector<f64> {
    let (s, c) = theta.sin_cos();
    let mut out = x.clone();
    out[0] = c * x[0] - s * x[1];
    out[1] = s * x[0] + c * x[1];
    out
}

impl SphereMap {
    fn with(n: usize, family: SphereFamily) -> Result<Self> {
        if n < 2 {
            return domain(format!("sphere maps need ambient dimension at least 2, got {n}"));
        }
        Ok(Self { n, family, fd_step: DEFAULT_STEP })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::with(n, SphereFamily::Identity)
    }

    pub fn rotation(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::Shape(format!("rotation matrix is {}x{}", q.nrows(), q.ncols())));
        }
        let n = q.nrows();
        let dev = (q.transpose() * &q - DMatrix::<f64>::identity(n, n)).abs().max();
        if dev > 1e-10 {
            return domain(format!("matrix is not orthogonal (|Q^T Q - I| = {dev:e})"));
        }
        Self::with(n, SphereFamily::Rotation(q))
    }

    /// Haar-random orthogonal matrix (QR of a Gaussian matrix, signs fixed).
    pub fn random_rotation(n: usize, seed: u64) -> Result<Self> {
        let mut rng = item_rng(seed, n as u64);
        let g = DMatrix::from_fn(n, n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let qr = g.qr();
        let (mut q, r) = (qr.q(), qr.r());
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Self::rotation(q)
    }

    /// A diffeomorphism for every finite amplitude (height is preserved and
    /// the inverse twists back); `n >= 3` so the height axis is not rotated.
    pub fn latitude_twist(n: usize, profile: Profile, amplitude: f64) -> Result<Self> {
        if n < 3 {
            return domain("latitude twist needs ambient dimension at least 3");
        }
        if !amplitude.is_finite() {
            return domain("amplitude must be finite");
        }
        Self::with(n, SphereFamily::LatitudeTwist { profile, amplitude })
    }

    pub fn normalized_perturbation(n: usize, field: TangentField, amplitude: f64) -> Result<Self> {
        let TangentField::Linear(b) = &field;
        if b.shape() != (n, n) {
            return Err(Error::Shape(format!("field matrix is {:?}, expected {n}x{n}", b.shape())));
        }
        if !amplitude.is_finite() {
            return domain("amplitude must be finite");
        }
        Self::with(n, SphereFamily::NormalizedPerturbation { field, amplitude })
    }

    /// Analytic for identity, rotation and twist; finite differences otherwise.
    pub fn default_mode(&self) -> DerivativeMode {
        match self.family {
            SphereFamily::NormalizedPerturbation { .. } => DerivativeMode::FiniteDifference,
            _ => DerivativeMode::Analytic,
        }
    }

    pub fn has_analytic(&self) -> bool {
        self.default_mode() == DerivativeMode::Analytic
    }

    fn twist_angle(&self, x: &DVector<f64>) -> f64 {
        match self.family {
            SphereFamily::LatitudeTwist { profile, amplitude } => amplitude * profile.eval(x[self.n - 1]).0,
            _ => 0.0,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let y = match &self.family {
            SphereFamily::Identity => return x.clone(),
            SphereFamily::Rotation(q) => q * x,
            SphereFamily::LatitudeTwist { .. } => plane_rotation(self.twist_angle(x), x),
            SphereFamily::NormalizedPerturbation { field, amplitude } => x + field.eval(x) * *amplitude,
        };
        let n = y.norm();
        y / n
    }

    /// `d sigma_x(w)` for `w` tangent at `x` (the normal part of `w` is dropped).
    pub fn differential(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let w = w - x * x.dot(w);
        match (&self.family, self.default_mode()) {
            (SphereFamily::Identity, _) => w,
            (SphereFamily::Rotation(q), _) => q * w,
            (SphereFamily::LatitudeTwist { profile, amplitude }, _) => {
                let dtheta = amplitude * profile.eval(x[self.n - 1]).1 * w[self.n - 1];
                plane_rotation(self.twist_angle(x), &(&w + quarter_turn(x) * dtheta))
            }
            _ => self.differential_fd(x, &w),
        }
    }

    /// Central difference of `sigma` along the great circle through `x` with
    /// initial velocity `w / |w|`, scaled by `|w|`.
    pub fn differential_fd(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let len = w.norm();
        if len == 0.0 {
            return DVector::zeros(x.len());
        }
        let u = w / len;
        let h = self.fd_step;
        let (s, c) = h.sin_cos();
        let fwd = self.eval(&(x * c + &u * s));
        let bwd = self.eval(&(x * c - &u * s));
        (fwd - bwd) * (len / (2.0 * h))
    }

    /// `d sigma_x` on an orthonormal basis of `T_x`: an `n x (n-1)` matrix.
    pub fn tangent_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let basis = complement_basis(x);
        let cols: Vec<DVector<f64>> = basis.column_iter().map(|e| self.differential(x, &e.into_owned())).collect();
        DMatrix::from_columns(&cols)
    }

    /// Smallest singular value of `d sigma` over `count` seeded random points.
    pub fn diffeomorphism_margin(&self, count: usize, seed: u64) -> f64 {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let x = UnitVector::random(self.n, &mut item_rng(seed, i as u64)).into_inner();
                self.tangent_jacobian(&x).svd(false, false).singular_values.min()
            })
            .reduce(|| f64::INFINITY, f64::min)
    }
}

/// Samples of `c = sigma o gamma` on the grid `t_j = j h`, `0 <= t_j <= pi`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSamples {
    pub h: f64,
    pub mode: DerivativeMode,
    pub t: Vec<f64>,
    pub c: Vec<DVector<f64>>,
    pub c_dot: Vec<DVector<f64>>,
    pub c_ddot: Vec<DVector<f64>>,
    /// `c(0) cos t + c'(0) sin t`.
    pub cbar: Vec<DVector<f64>>,
    pub cbar_dot: Vec<DVector<f64>>,
}

impl CurveSamples {
    /// `|c'' + c|` along the grid.
    pub fn curvature_defect(&self) -> Vec<f64> {
        self.c.iter().zip(&self.c_ddot).map(|(c, a)| (a + c).norm()).collect()
    }

    /// `max |(|c'' + c|^2) - (|c''|^2 - 2 |c'|^2 + 1)|`.
    pub fn identity_residual(&self) -> f64 {
        self.c
            .iter()
            .zip(&self.c_dot)
            .zip(&self.c_ddot)
            .map(|((c, v), a)| ((a + c).norm_squared() - (a.norm_squared() - 2.0 * v.norm_squared() + 1.0)).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `angle(cbar(t), c(t))`.
    pub fn max_comparison_angle(&self) -> f64 {
        self.cbar.iter().zip(&self.c).map(|(b, c)| angle(b, c).unwrap_or(PI)).fold(0.0, f64::max)
    }

    /// Smallest `<cbar(t), c(t)>`.
    pub fn min_comparison_inner(&self) -> f64 {
        self.cbar.iter().zip(&self.c).map(|(b, c)| b.dot(c)).fold(f64::INFINITY, f64::min)
    }

    /// Largest `|c''|^2`.
    pub fn max_acceleration_sq(&self) -> f64 {
        self.c_ddot.iter().map(|a| a.norm_squared()).fold(0.0, f64::max)
    }

    /// Tolerance for inequalities built from these derivatives.
    pub fn derivative_tolerance(&self) -> f64 {
        match self.mode {
            DerivativeMode::Analytic => 1e-9,
            DerivativeMode::FiniteDifference => 5.0 * self.h * self.h,
        }
    }
}

/// Number of grid steps for `h`, which must divide `pi` into at least 64 steps.
pub fn grid_steps(h: f64) -> Result<usize> {
    if !(h > 0.0) {
        return domain(format!("step must be positive, got {h}"));
    }
    let n = (PI / h).round();
    if (n * h - PI).abs() > 1e-9 || n < 64.0 {
        return domain(format!("step {h} must divide pi into at least 64 equal steps"));
    }
    Ok(n as usize)
}

pub fn curve_samples(sigma: &SphereMap, gamma: &GeodesicSegment, h: f64, mode: DerivativeMode) -> Result<CurveSamples> {
    if gamma.dim() != sigma.n {
        return Err(Error::Shape(format!("geodesic in R^{} for a map of S^{}", gamma.dim(), sigma.n - 1)));
    }
    if mode == DerivativeMode::Analytic && !sigma.has_analytic() {
        return domain("analytic derivatives are not available for this family");
    }
    let steps = grid_steps(h)?;
    let t: Vec<f64> = (0..=steps).map(|j| j as f64 * h).collect();
    let mut c = Vec::with_capacity(t.len());
    let mut c_dot = Vec::with_capacity(t.len());
    let mut c_ddot = Vec::with_capacity(t.len());
    for &tj in &t {
        let g = gamma.eval(tj);
        match mode {
            DerivativeMode::FiniteDifference => {
                // gamma is a full great circle, so both neighbours exist at the ends.
                let cp = sigma.eval(&gamma.eval(tj + h));
                let cm = sigma.eval(&gamma.eval(tj - h));
                let c0 = sigma.eval(&g);
                c_dot.push((&cp - &cm) / (2.0 * h));
                c_ddot.push((&cp - &c0 * 2.0 + &cm) / (h * h));
                c.push(c0);
            }
            DerivativeMode::Analytic => {
                let gd = gamma.velocity(tj);
                let (pos, vel, acc) = analytic_jet(sigma, &g, &gd);
                c.push(pos);
                c_dot.push(vel);
                c_ddot.push(acc);
            }
        }
    }
    let (c0, v0) = (c[0].clone(), c_dot[0].clone());
    let cbar = t.iter().map(|&s| &c0 * s.cos() + &v0 * s.sin()).collect();
    let cbar_dot = t.iter().map(|&s| &v0 * s.cos() - &c0 * s.sin()).collect();
    Ok(CurveSamples { h, mode, t, c, c_dot, c_ddot, cbar, cbar_dot })
}

/// `(c, c', c'')` for `c = sigma o gamma` with `gamma'' = -gamma`.
fn analytic_jet(sigma: &SphereMap, g: &DVector<f64>, gd: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    match &sigma.family {
        SphereFamily::Identity => (g.clone(), gd.clone(), -g),
        SphereFamily::Rotation(q) => (q * g, q * gd, -(q * g)),
        SphereFamily::LatitudeTwist { profile, amplitude } => {
            let n = sigma.n - 1;
            let (z, zd, zdd) = (g[n], gd[n], -g[n]);
            let (phi, dphi, ddphi) = profile.eval(z);
            let th = amplitude * phi;
            let thd = amplitude * dphi * zd;
            let thdd = amplitude * (ddphi * zd * zd + dphi * zdd);
            // c = R g,  c' = R (th' J g + g'),
            // c'' = R (th'' J g + th'^2 J^2 g + 2 th' J g' - g).
            let jg = quarter_turn(g);
            let jjg = quarter_turn(&jg);
            let jgd = quarter_turn(gd);
            let pos = plane_rotation(th, g);
            let vel = plane_rotation(th, &(&jg * thd + gd));
            let acc = plane_rotation(th, &(&jg * thdd + &jjg * (thd * thd) + &jgd * (2.0 * thd) - g));
            (pos, vel, acc)
        }
        SphereFamily::NormalizedPerturbation { .. } => unreachable!("no analytic jet for this family"),
    }
}

/// Composite Simpson value of `int_0^pi e^{-t} |c'' + c| dt` (a 3/8 panel
/// closes an odd step count).
pub fn alpha_integral(cs: &CurveSamples) -> f64 {
    let f: Vec<f64> = cs.t.iter().zip(cs.curvature_defect()).map(|(t, d)| (-t).exp() * d).collect();
    simpson(&f, cs.h)
}

fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    let (even_end, tail) = if n.is_multiple_of(2) { (n, 0.0) } else { (n - 3, 3.0 * h / 8.0 * (f[n - 3] + 3.0 * f[n - 2] + 3.0 * f[n - 1] + f[n])) };
    let mut s = f[0] + f[even_end];
    for (i, v) in f.iter().enumerate().take(even_end).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0 + tail
}

/// Slacks of the comparison-curve inequalities with `alpha = e^pi * integral`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainReport {
    pub alpha: f64,
    /// `min_theta <c(0), c(theta)> cos theta - (cos^2 theta - alpha |cos theta|)`.
    pub base_slack: f64,
    /// `min_theta <c'(0), c(theta)> sin theta - (|c'(0)|^2 sin^2 theta - alpha |c'(0)| sin theta)`.
    pub velocity_slack: f64,
    /// `alpha - ||c'(0)| - 1|`.
    pub speed_slack: f64,
    /// `min <cbar, c>`; required positive when `alpha <= 1 - 1/sqrt 2`.
    pub min_inner: f64,
    pub inner_required: bool,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GronwallReport {
    /// `max_t sqrt(|c - cbar|^2 + |c' - cbar'|^2)`.
    pub max_lhs: f64,
    /// `e^pi * alpha_integral`.
    pub rhs: f64,
    pub tolerance: f64,
    pub holds: bool,
    pub chain: ChainReport,
}

pub fn gronwall_check(cs: &CurveSamples) -> GronwallReport {
    let tol = cs.derivative_tolerance();
    let max_lhs = cs
        .c
        .iter()
        .zip(&cs.cbar)
        .zip(cs.c_dot.iter().zip(&cs.cbar_dot))
        .map(|((c, b), (cd, bd))| ((c - b).norm_squared() + (cd - bd).norm_squared()).sqrt())
        .fold(0.0, f64::max);
    let alpha = PI.exp() * alpha_integral(cs);
    let (c0, v0) = (&cs.c[0], &cs.c_dot[0]);
    let speed = v0.norm();
    let mut base_slack = f64::INFINITY;
    let mut velocity_slack = f64::INFINITY;
    for (th, c) in cs.t.iter().zip(&cs.c) {
        let (s, co) = th.sin_cos();
        base_slack = base_slack.min(c0.dot(c) * co - (co * co - alpha * co.abs()));
        velocity_slack = velocity_slack.min(v0.dot(c) * s - (speed * speed * s * s - alpha * speed * s));
    }
    let speed_slack = alpha - (speed - 1.0).abs();
    let min_inner = cs.min_comparison_inner();
    let inner_required = alpha <= 1.0 - FRAC_1_SQRT_2;
    let chain_holds =
        base_slack >= -tol && velocity_slack >= -tol && speed_slack >= -tol && (!inner_required || min_inner > 0.0);
    let chain = ChainReport { alpha, base_slack, velocity_slack, speed_slack, min_inner, inner_required, holds: chain_holds };
    GronwallReport { max_lhs, rhs: alpha, tolerance: tol, holds: max_lhs <= alpha + tol, chain }
}

/// `Lip^b(sigma)` estimate: the largest of `r` and `1/r` over chordal ratios
/// `r = |sigma u - sigma v| / |u - v|` of `pairs` seeded pairs (half of them
/// uniform, half at distances down to `1e-4`), optionally tightened by the
/// extreme singular values of `d sigma` at `max(pairs / 10, 64)` points.
pub fn bilip_estimate(sigma: &SphereMap, pairs: usize, seed: u64, use_differential: bool) -> Result<f64> {
    Ok(bilip_witness(sigma, pairs, seed, use_differential)?.0)
}

/// [`bilip_estimate`] together with a geodesic carrying the extreme ratio
/// (through the worst pair, or along the worst singular direction).
pub fn bilip_witness(sigma: &SphereMap, pairs: usize, seed: u64, use_differential: bool) -> Result<(f64, GeodesicSegment)> {
    let n = sigma.n;
    let ratios: Vec<Result<(f64, usize)>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let (u, v) = bilip_pair(n, seed, i)?;
            let d = (&u - &v).norm();
            if d == 0.0 {
                return Ok((1.0, i));
            }
            let r = (sigma.eval(&u) - sigma.eval(&v)).norm() / d;
            if !(r.is_finite() && r > 0.0) {
                return domain(format!("sigma collapses a pair (ratio {r})"));
            }
            Ok((r.max(1.0 / r), i))
        })
        .collect();
    let mut best = (1.0 - 1e-12, usize::MAX);
    for r in ratios {
        let r = r?;
        if r.0 > best.0 {
            best = r;
        }
    }
    let mut witness = if best.1 == usize::MAX {
        None
    } else {
        let (u, v) = bilip_pair(n, seed, best.1)?;
        Some(GeodesicSegment::through(&UnitVector::new(u)?, &UnitVector::new(v)?)?.0)
    };
    let mut lip = best.0;
    if use_differential {
        let count = (pairs / 10).max(64);
        let (local, i) = (0..count)
            .into_par_iter()
            .map(|i| {
                let x = UnitVector::random(n, &mut item_rng(seed ^ 0xd1ff, i as u64)).into_inner();
                (distortion(sigma, &x).0, i)
            })
            .reduce(|| (0.0, usize::MAX), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
        if !local.is_finite() {
            return domain("d sigma is singular at a sampled point");
        }
        // Pattern search from the best sample: the supremum sits at a smooth
        // maximum, which plain sampling undershoots by O(spacing^2).
        let mut x = UnitVector::random(n, &mut item_rng(seed ^ 0xd1ff, i as u64)).into_inner();
        let (mut val, mut dir) = distortion(sigma, &x);
        let mut step: f64 = 0.05;
        while step > 1e-7 {
            let basis = complement_basis(&x);
            let mut moved = false;
            for e in basis.column_iter() {
                for sign in [1.0, -1.0] {
                    let (sn, cs) = (sign * step).sin_cos();
                    let y = &x * cs + e * sn;
                    let y = &y / y.norm();
                    let (v, d) = distortion(sigma, &y);
                    if v > val {
                        (x, val, dir, moved) = (y, v, d, true);
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if val > lip {
            lip = val;
            witness = Some(GeodesicSegment::half_circle(UnitVector::new(x)?, UnitVector::new(dir)?)?);
        }
    }
    let witness = match witness {
        Some(w) => w,
        None => sampled_geodesic(n, seed, 0),
    };
    Ok((lip, witness))
}

/// `max(s_max, 1/s_min)` of `d sigma_x` and the tangent direction attaining it.
fn distortion(sigma: &SphereMap, x: &DVector<f64>) -> (f64, DVector<f64>) {
    let basis = complement_basis(x);
    let svd = sigma.tangent_jacobian(x).svd(false, true);
    let sv = &svd.singular_values;
    let vt = svd.v_t.as_ref().expect("requested");
    let (imax, imin) = (sv.imax(), sv.imin());
    let (val, k) = if sv[imax] >= 1.0 / sv[imin] { (sv[imax], imax) } else { (1.0 / sv[imin], imin) };
    let mut dir = &basis * vt.row(k).transpose();
    dir -= x * x.dot(&dir);
    let len = dir.norm();
    (val, dir / len)
}

fn bilip_pair(n: usize, seed: u64, i: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut rng = item_rng(seed, i as u64);
    let u = UnitVector::random(n, &mut rng).into_inner();
    let v = if i.is_multiple_of(2) {
        UnitVector::random(n, &mut rng).into_inner()
    } else {
        let gamma = GeodesicSegment::half_circle(UnitVector::new(u.clone())?, random_tangent(&u, &mut rng)?)?;
        gamma.eval(10f64.powf(-rng.random_range(0.0..4.0)))
    };
    Ok((u, v))
}

fn random_tangent<R: Rng + ?Sized>(x: &DVector<f64>, rng: &mut R) -> Result<UnitVector> {
    loop {
        let g = UnitVector::random(x.len(), rng).into_inner();
        let w = &g - x * x.dot(&g);
        if w.norm() > 1e-6 {
            return UnitVector::new(w);
        }
    }
}

/// Smallest slack of `|<sigma u, sigma v> - <u, v>| <= ((lip^2 - 1) / 2) |u - v|^2`
/// over `pairs` seeded pairs drawn like those of [`bilip_estimate`].
pub fn inner_product_deviation_slack(sigma: &SphereMap, lip: f64, pairs: usize, seed: u64) -> Result<f64> {
    let slacks: Vec<Result<f64>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let (u, v) = bilip_pair(sigma.n, seed, i)?;
            let dev = (sigma.eval(&u).dot(&sigma.eval(&v)) - u.dot(&v)).abs();
            Ok(0.5 * (lip * lip - 1.0) * (&u - &v).norm_squared() - dev)
        })
        .collect();
    slacks.into_iter().try_fold(f64::INFINITY, |acc, s| Ok(acc.min(s?)))
}

/// Seeded geodesic number `index` of a sampled family.
pub fn sampled_geodesic(n: usize, seed: u64, index: usize) -> GeodesicSegment {
    GeodesicSegment::random(n, &mut item_rng(seed, index as u64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionEntry {
    /// `"1.5a"`, `"1.5b"`, `"1.6"` or `"1.7"`.
    pub name: &'static str,
    pub satisfied: bool,
    /// Slack of the inequality; negative when violated.
    pub margin: f64,
    /// Geodesic attaining the margin: the worst sampled curve for the
    /// curvature and angle conditions, the geodesic carrying the extreme
    /// chordal ratio for the `Lip^b` conditions.
    pub worst_geodesic: GeodesicSegment,
    /// Index of `worst_geodesic` in the sampled family, when it is one of them.
    pub worst_geodesic_id: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
    pub lip_b: f64,
    pub k: f64,
    pub alpha_threshold: f64,
    pub dimension_threshold: f64,
    /// Largest `|c'' + c|^2` identity residual over all sampled geodesics.
    pub identity_residual: f64,
    pub max_alpha_integral: f64,
    /// Whether every sampled alpha-integral is below the threshold (`+1e-9`)
    /// whenever both halves of the curvature condition hold; vacuous otherwise.
    pub alpha_implied: bool,
    pub geodesic_count: usize,
    pub seed: u64,
}

impl ConditionReport {
    pub fn entry(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn all_satisfied(&self) -> bool {
        self.entries.iter().all(|e| e.satisfied)
    }
}

/// Per-geodesic quantities shared by the condition checks.
struct GeodesicStats {
    max_acc_sq: f64,
    max_angle: f64,
    residual: f64,
    alpha: f64,
}

fn geodesic_stats(sigma: &SphereMap, gamma: &GeodesicSegment, h: f64) -> Result<GeodesicStats> {
    let cs = curve_samples(sigma, gamma, h, sigma.default_mode())?;
    Ok(GeodesicStats {
        max_acc_sq: cs.max_acceleration_sq(),
        max_angle: cs.max_comparison_angle(),
        residual: cs.identity_residual(),
        alpha: alpha_integral(&cs),
    })
}

/// Pairs used for the `Lip^b` estimate inside [`check_conditions`].
pub const CONDITION_PAIRS: usize = 20_000;

pub fn check_conditions(sigma: &SphereMap, geodesic_count: usize, seed: u64, h: f64) -> Result<ConditionReport> {
    if geodesic_count == 0 {
        return domain("geodesic_count must be at least 1");
    }
    grid_steps(h)?;
    let n = sigma.n;
    let k = k_constant();
    let (lip_b, lip_geodesic) = bilip_witness(sigma, CONDITION_PAIRS, seed, true)?;
    let stats: Vec<Result<GeodesicStats>> =
        (0..geodesic_count).into_par_iter().map(|i| geodesic_stats(sigma, &sampled_geodesic(n, seed, i), h)).collect();
    let stats: Vec<GeodesicStats> = stats.into_iter().collect::<Result<_>>()?;

    let argmax = |key: &dyn Fn(&GeodesicStats) -> f64| {
        let mut best = 0;
        for (i, s) in stats.iter().enumerate() {
            if key(s) > key(&stats[best]) {
                best = i;
            }
        }
        best
    };
    let inv_sq = lip_b.powi(-2);
    let m15a = inv_sq - (1.0 - k * k);
    let acc_i = argmax(&|s| s.max_acc_sq);
    let m15b = inv_sq + k * k - stats[acc_i].max_acc_sq;
    let dim_t = dimension_threshold(n);
    let m16 = 1.0 + dim_t - lip_b * lip_b;
    let ang_i = argmax(&|s| s.max_angle);
    let m17 = PI / 2.0 - stats[ang_i].max_angle;

    let entries = vec![
        ConditionEntry { name: "1.5a", satisfied: m15a >= 0.0, margin: m15a, worst_geodesic: lip_geodesic.clone(), worst_geodesic_id: None },
        ConditionEntry {
            name: "1.5b",
            satisfied: m15b >= 0.0,
            margin: m15b,
            worst_geodesic: sampled_geodesic(n, seed, acc_i),
            worst_geodesic_id: Some(acc_i),
        },
        ConditionEntry { name: "1.6", satisfied: m16 >= 0.0, margin: m16, worst_geodesic: lip_geodesic, worst_geodesic_id: None },
        ConditionEntry {
            name: "1.7",
            satisfied: m17 > 0.0,
            margin: m17,
            worst_geodesic: sampled_geodesic(n, seed, ang_i),
            worst_geodesic_id: Some(ang_i),
        },
    ];
    let identity_residual = stats.iter().map(|s| s.residual).fold(0.0, f64::max);
    let max_alpha_integral = stats.iter().map(|s| s.alpha).fold(0.0, f64::max);
    let threshold = alpha_threshold();
    let curvature_ok = m15a >= 0.0 && m15b >= 0.0;
    let alpha_implied = !curvature_ok || max_alpha_integral <= threshold + 1e-9;
    Ok(ConditionReport {
        entries,
        lip_b,
        k,
        alpha_threshold: threshold,
        dimension_threshold: dim_t,
        identity_residual,
        max_alpha_integral,
        alpha_implied,
        geodesic_count,
        seed,
    })
}

/// Margin of the comparison-angle condition for one sampled geodesic:
/// `pi/2 - max_t angle(cbar(t), c(t))`.
pub fn comparison_angle_margin(sigma: &SphereMap, gamma: &GeodesicSegment, h: f64) -> Result<f64> {
    Ok(PI / 2.0 - curve_samples(sigma, gamma, h, sigma.default_mode())?.max_comparison_angle())
}

/// Bisects on the twist amplitude in `[lo, hi]` for the smallest amplitude at
/// which some sampled geodesic has `angle(cbar, c) >= pi/2`. The comparison
/// margin must be positive at `lo` and non-positive at `hi`. Returns an
/// amplitude with non-positive margin.
pub fn obtuse_twist_amplitude(
    n: usize,
    profile: Profile,
    lo: f64,
    hi: f64,
    steps: usize,
    geodesic_count: usize,
    seed: u64,
) -> Result<f64> {
    let margin = |a: f64| -> Result<f64> {
        let sigma = SphereMap::latitude_twist(n, profile, a)?;
        let vals: Vec<Result<f64>> = (0..geodesic_count)
            .into_par_iter()
            .map(|i| comparison_angle_margin(&sigma, &sampled_geodesic(n, seed, i), DEFAULT_STEP))
            .collect();
        vals.into_iter().try_fold(f64::INFINITY, |acc, v| Ok(acc.min(v?)))
    };
    if margin(lo)? <= 0.0 || margin(hi)? > 0.0 {
        return domain(format!("comparison margin does not change sign on [{lo}, {hi}]"));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..steps {
        let mid = 0.5 * (a + b);
        if margin(mid)? > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gamma(seed: u64, n: usize) -> GeodesicSegment {
        sampled_geodesic(n, seed, 0)
    }

    #[test]
    fn constants() {
        let k = k_constant();
        assert_abs_diff_eq!(k * k, 8.750e-5, epsilon = 5e-8);
        assert_abs_diff_eq!(alpha_threshold(), 0.012657, epsilon = 5e-7);
        assert_abs_diff_eq!(dimension_threshold(2), 0.6267, epsilon = 5e-5);
        assert_abs_diff_eq!(dimension_threshold(8), 0.2369, epsilon = 5e-5);
    }

    #[test]
    fn identity_and_rotation_curves_are_great_circles() {
        for sigma in [SphereMap::identity(4).unwrap(), SphereMap::random_rotation(4, 3).unwrap()] {
            let g = gamma(1, 4);
            let cs = curve_samples(&sigma, &g, DEFAULT_STEP, DerivativeMode::Analytic).unwrap();
            for (c, a) in cs.c.iter().zip(&cs.c_ddot) {
                assert!((a + c).norm() < 1e-14);
            }
            assert!(alpha_integral(&cs).abs() <= 1e-8);
            let gr = gronwall_check(&cs);
            assert!(gr.holds && gr.max_lhs < 1e-12 && gr.chain.holds);
        }
        let sigma = SphereMap::identity(3).unwrap();
        let g = gamma(2, 3);
        let cs = curve_samples(&sigma, &g, DEFAULT_STEP, DerivativeMode::Analytic).unwrap();
        for (j, t) in cs.t.iter().enumerate() {
            assert_abs_diff_eq!(cs.c[j], g.eval(*t), epsilon = 1e-15);
            assert_abs_diff_eq!(cs.c_dot[j], g.velocity(*t), epsilon = 1e-15);
        }
    }

    #[test]
    fn twist_derivatives_are_richardson_consistent() {
        let sigma = SphereMap::latitude_twist(3, Profile::Linear, 0.1).unwrap();
        let g = gamma(5, 3);
        let an = curve_samples(&sigma, &g, PI / 256.0, DerivativeMode::Analytic).unwrap();
        let f1 = curve_samples(&sigma, &g, PI / 256.0, DerivativeMode::FiniteDifference).unwrap();
        let f2 = curve_samples(&sigma, &g, PI / 512.0, DerivativeMode::FiniteDifference).unwrap();
        assert!(an.curvature_defect().iter().any(|d| *d > 1e-3));
        // Central differences are O(h^2): halving h cuts the error by ~4.
        let err = |f: &CurveSamples, stride: usize| {
            (0..an.t.len()).map(|j| (&f.c_ddot[j * stride] - &an.c_ddot[j]).norm()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(&f1, 1), err(&f2, 2));
        assert!(e1 > 0.0 && (e1 / e2 - 4.0).abs() < 0.2, "{e1} {e2}");
    }

    #[test]
    fn differential_is_tangent_and_matches_fd() {
        let sigma = SphereMap::latitude_twist(4, Profile::Sine, 0.7).unwrap();
        let mut rng = item_rng(9, 0);
        for _ in 0..20 {
            let x = UnitVector::random(4, &mut rng).into_inner();
            let w = random_tangent(&x, &mut rng).unwrap().into_inner();
            let d = sigma.differential(&x, &w);
            assert!(d.dot(&sigma.eval(&x)).abs() < 1e-12);
            assert_abs_diff_eq!(d, sigma.differential_fd(&x, &w), epsilon = 1e-4);
            assert!((sigma.eval(&x).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_mode_requires_a_closed_form() {
        let sigma = SphereMap::normalized_perturbation(3, TangentField::random_linear(3, 0), 0.05).unwrap();
        assert!(curve_samples(&sigma, &gamma(0, 3), DEFAULT_STEP, DerivativeMode::Analytic).is_err());
        assert!(curve_samples(&sigma, &gamma(0, 3), DEFAULT_STEP, DerivativeMode::FiniteDifference).is_ok());
        assert!(curve_samples(&sigma, &gamma(0, 3), PI / 10.0, DerivativeMode::FiniteDifference).is_err());
    }

    #[test]
    fn bilip_examples() {
        assert_abs_diff_eq!(bilip_estimate(&SphereMap::identity(3).unwrap(), 2000, 1, true).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(bilip_estimate(&SphereMap::random_rotation(5, 2).unwrap(), 2000, 1, true).unwrap(), 1.0, epsilon = 1e-9);
        let mut last = 1.0;
        for a in [0.01, 0.05, 0.1] {
            let l = bilip_estimate(&SphereMap::latitude_twist(3, Profile::Linear, a).unwrap(), 20_000, 1, true).unwrap();
            assert!(l > last);
            last = l;
        }
    }

    #[test]
    fn condition_examples() {
        let rep = check_conditions(&SphereMap::identity(3).unwrap(), 32, 1, DEFAULT_STEP).unwrap();
        assert!(rep.all_satisfied());
        assert_abs_diff_eq!(rep.entry("1.5b").unwrap().margin, rep.k * rep.k, epsilon = 1e-12);

        let rep = check_conditions(&SphereMap::random_rotation(8, 1).unwrap(), 32, 1, DEFAULT_STEP).unwrap();
        assert_abs_diff_eq!(rep.entry("1.6").unwrap().margin, dimension_threshold(8), epsilon = 1e-9);

        let sigma = SphereMap::latitude_twist(3, Profile::Linear, 0.5).unwrap();
        let rep = check_conditions(&sigma, 32, 1, DEFAULT_STEP).unwrap();
        let e = rep.entry("1.5a").unwrap();
        assert!(!e.satisfied);
        assert!(rep.lip_b > (1.0 / (1.0 - rep.k * rep.k)).sqrt());
        let worst = rep.entry("1.5b").unwrap().worst_geodesic.clone();
        let cs = curve_samples(&sigma, &worst, DEFAULT_STEP, DerivativeMode::Analytic).unwrap();
        let again = rep.lip_b.powi(-2) + rep.k * rep.k - cs.max_acceleration_sq();
        assert_abs_diff_eq!(again, rep.entry("1.5b").unwrap().margin, epsilon = 1e-6);
    }
}
