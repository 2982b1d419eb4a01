use std::f64::consts::FRAC_PI_2;

use nsg_core::manifolds::{sphere_band_grid, sphere_polar_grid, torus_grid, DistanceFunction, ModelManifold};
use nsg_core::mollify::*;
use serde_json::json;

use super::vector;
use crate::config::{ManifoldKind, MollifyParams};
use crate::report::{CheckError, Runner, Verdict};

pub fn run(p: &MollifyParams, r: &mut Runner) -> Result<(), CheckError> {
    let dim = p.manifold.dim;
    let (man, grid) = match p.manifold.kind {
        ManifoldKind::FlatTorus => (ModelManifold::FlatTorus(dim), torus_grid(dim, p.grid)),
        ManifoldKind::Sphere => (ModelManifold::Sphere(dim), sphere_polar_grid(p.grid, p.grid)),
    };
    let (pou, _) = r.compute("partition of unity", || match p.manifold.kind {
        ManifoldKind::FlatTorus => PartitionOfUnity::flat_torus(dim),
        ManifoldKind::Sphere => PartitionOfUnity::sphere_icosahedral(),
    })?;
    let quad = match QuadratureKind::default_for(dim) {
        QuadratureKind::MonteCarlo { count, .. } => QuadratureKind::MonteCarlo { count, seed: p.quadrature_seed },
        k => k,
    };
    let (f, _) = r.compute("distance function", || DistanceFunction::new(man, vector(&p.p)))?;

    let mut errors = Vec::new();
    for &eps in &p.epsilons {
        let name = format!("sup error at epsilon = {eps}");
        let (rep, ms) = r.compute(&name, || sup_error_report(&smooth_function(&f, &pou, eps, quad)?, &grid))?;
        r.push(
            name,
            "Lemma lemN5",
            ms,
            Verdict::new(rep.holds, rep.bound - rep.max_abs_err).with_detail(json!({
                "max_abs_err": rep.max_abs_err,
                "bound": rep.bound,
                "worst_point": rep.worst_point.as_ref().map(|q| q.as_slice().to_vec()),
                "grid_points": grid.len(),
            })),
        );
        r.row(eps, "max_abs_err", rep.max_abs_err, None, Some(p.quadrature_seed));
        r.row(eps, "bound", rep.bound, None, Some(p.quadrature_seed));
        errors.push((eps, rep.max_abs_err));
    }
    if errors.len() > 1 {
        errors.sort_by(|a, b| b.0.total_cmp(&a.0));
        let margin = errors.windows(2).map(|w| w[0].1 + 1e-9 - w[1].1).fold(f64::INFINITY, f64::min);
        r.push("error shrinks with epsilon", "Lemma lemN5", None, Verdict::new(margin >= 0.0, margin));
    }

    if let Some(o) = &p.obtuse {
        let name = "obtuse smoothed gradients";
        let k_grid = sphere_band_grid(o.rows, o.cols, o.band);
        let (rep, ms) = r.compute(name, || obtuse_gradient_report(&pou, &vector(&p.p), &vector(&o.q), &k_grid, o.epsilon, quad))?;
        let margin = rep.min_angle - FRAC_PI_2 - o.min_excess;
        r.push(
            name,
            "Lemma lemN12",
            ms,
            Verdict::new(rep.holds && margin > 0.0, margin).with_detail(json!({
                "min_angle": rep.min_angle,
                "worst_point": rep.worst_point.as_ref().map(|q| q.as_slice().to_vec()),
            })),
        );
    }
    Ok(())
}
