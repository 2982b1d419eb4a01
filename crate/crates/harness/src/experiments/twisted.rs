use std::f64::consts::FRAC_PI_2;

use nsg_core::manifolds::{sphere_polar_grid, torus_grid, twisted_conditions_check, ModelManifold, Witness};
use serde_json::{json, Value};

use super::{finite, vector};
use crate::config::{ManifoldKind, TwistedParams};
use crate::report::{CheckError, Runner, Verdict};

/// Witnesses listed in full in a report; the rest are only counted.
const LISTED_WITNESSES: usize = 16;

fn witnesses(all: &[Witness], condition: &str) -> Value {
    let picked: Vec<&Witness> = all.iter().filter(|w| w.condition == condition).collect();
    json!({
        "count": picked.len(),
        "listed": picked.iter().take(LISTED_WITNESSES).map(|w| json!({ "point": w.point.as_slice(), "value": w.value })).collect::<Vec<_>>(),
    })
}

pub fn run(p: &TwistedParams, r: &mut Runner) -> Result<(), CheckError> {
    let (man, grid) = match p.manifold.kind {
        ManifoldKind::Sphere => (ModelManifold::Sphere(p.manifold.dim), sphere_polar_grid(p.grid, p.grid)),
        ManifoldKind::FlatTorus => (ModelManifold::FlatTorus(p.manifold.dim), torus_grid(p.manifold.dim, p.grid)),
    };
    let name = "twisted-sphere hypotheses";
    let (rep, ms) = r.compute(name, || twisted_conditions_check(&man, &vector(&p.p), &vector(&p.q), &grid, p.tol))?;
    r.push(
        "d_p has no critical point in D(p), d_q none in D(q)",
        "condition (1.8)",
        ms,
        Verdict { satisfied: rep.cond_18, margin: finite(rep.crit_margin), detail: Some(json!({ "witnesses": witnesses(&rep.witnesses, "1.8") })) },
    );
    r.push(
        "minimal directions to p and q are obtuse on the bisector",
        "condition (1.9)",
        ms,
        Verdict {
            satisfied: rep.cond_19,
            margin: finite(rep.worst_angle - FRAC_PI_2),
            detail: Some(json!({
                "worst_angle": finite(rep.worst_angle),
                "bisector_points": rep.bisector_points,
                "witnesses": witnesses(&rep.witnesses, "1.9"),
            })),
        },
    );
    Ok(())
}
