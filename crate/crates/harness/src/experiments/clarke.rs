use nsg_core::clarke::catalog::{abs_sum_map, max_square_line};
use nsg_core::clarke::*;
use nsg_core::geometry::{hull_matrix_sample, UnitVector};
use serde_json::json;

use super::vector;
use crate::config::ClarkeParams;
use crate::report::{CheckError, Runner, Verdict};

/// Closed-form subdifferential of `max(x^2, x + 2)` at `x`.
fn analytic_interval(x: f64) -> (f64, f64) {
    let (a, b) = (x * x, x + 2.0);
    if a > b {
        (2.0 * x, 2.0 * x)
    } else if a < b {
        (1.0, 1.0)
    } else {
        (f64::min(2.0 * x, 1.0), f64::max(2.0 * x, 1.0))
    }
}

pub fn run(p: &ClarkeParams, r: &mut Runner) -> Result<(), CheckError> {
    let f = max_square_line();
    let cfg = SamplingConfig::scaled(p.radius_scale, p.seed);
    let cfg = SamplingConfig { per_radius: p.per_radius, ..cfg };

    for (x, lo, hi) in [(-1.0, -2.0, 1.0), (2.0, 1.0, 4.0)] {
        let name = format!("generalized gradient interval at x = {x}");
        let (gg, ms) = r.compute(&name, || sample_generalized_gradient(&f, &vector(&[x]), &cfg))?;
        // Hull of the samples from the smallest ball.
        let inner = GeneralizedGradient { samples: gg.innermost(), ..gg.clone() };
        let (a, b) = inner.bounding_box()[0];
        let err = f64::max((a - lo).abs(), (b - hi).abs());
        r.push(
            name,
            "Example 1.6",
            ms,
            Verdict::new(err <= p.interval_tol, p.interval_tol - err).with_detail(json!({ "sampled": [a, b], "expected": [lo, hi] })),
        );
        for s in &gg.samples {
            r.row(x, "gradient_sample", s[0], None, Some(p.seed));
        }
    }

    let tol = default_critical_tol(f.lip_bound());
    for &x in &p.points {
        let name = format!("criticality at x = {x}");
        r.check(&name, "Example 1.6", || {
            let gg = sample_generalized_gradient(&f, &vector(&[x]), &cfg)?;
            let c = is_critical(&gg, tol)?;
            let (lo, hi) = analytic_interval(x);
            let expected = lo <= 0.0 && 0.0 <= hi;
            let margin = if expected { tol - c.margin } else { c.margin - tol };
            Ok(Verdict::new(c.critical == expected, margin).with_detail(json!({
                "sampled_critical": c.critical,
                "analytic_critical": expected,
                "hull_distance": c.margin,
                "analytic_interval": [lo, hi],
            })))
        })?;
    }

    let map = abs_sum_map();
    let origin = vector(&[0.0, 0.0]);
    let (gd, ms) = r.compute("generalized differential at the origin", || sample_generalized_differential(&map, &origin, &cfg))?;
    let name = "non-singularity at the origin";
    let (margin, ms2) = r.compute(name, || nonsingularity_margin(&gd, p.hull_count, p.seed))?;
    r.push(
        name,
        "Example 1.7",
        ms.zip(ms2).map(|(a, b)| a + b),
        Verdict::new(margin > 0.0, margin).with_detail(json!({
            "closed_form": (3.0 - 5f64.sqrt()) / 2.0,
            "hull_samples": gd.samples.len() + p.hull_count,
        })),
    );
    r.check("determinant floor over the sampled hull", "Example 1.7", || {
        let hull = hull_matrix_sample(&gd.samples, p.seed, gd.samples.len() + p.hull_count)?;
        let floor = hull.iter().map(|a| a.determinant().abs()).fold(f64::INFINITY, f64::min);
        Ok(Verdict::new(floor > 0.0, floor))
    })?;
    r.check("cone certificate for u = (1, 0)", "Example 1.7", || {
        let c = cone_certificate(&gd, &UnitVector::basis(2, 0))?;
        let v = c.v.as_ref().map(|v| v.as_slice().to_vec());
        Ok(Verdict::new(c.certified(), c.delta).with_detail(json!({ "v": v })))
    })?;
    Ok(())
}
