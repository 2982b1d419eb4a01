use std::f64::consts::PI;

use nsg_core::sphere_maps::*;
use rayon::prelude::*;
use serde_json::json;

use super::{build_sigma, diffeomorphism_check, geodesic_json};
use crate::config::SigmaParams;
use crate::report::{CheckError, Runner, Verdict};

fn anchor(entry: &str) -> &'static str {
    match entry {
        "1.5a" => "condition (1.5), Lip^b part",
        "1.5b" => "condition (1.5), curvature part",
        "1.6" => "condition (1.6)",
        _ => "condition (1.7)",
    }
}

fn title(entry: &str) -> &'static str {
    match entry {
        "1.5a" => "Lip^b(sigma)^-2 >= 1 - K^2",
        "1.5b" => "max |c''|^2 <= Lip^b(sigma)^-2 + K^2",
        "1.6" => "Lip^b(sigma)^2 <= 1 + ((8/pi)(n-1))^-1/2",
        _ => "angle(cbar, c) < pi/2",
    }
}

pub fn run(p: &SigmaParams, r: &mut Runner) -> Result<(), CheckError> {
    let (sigma, _) = r.compute("sphere map", || build_sigma(p.n, &p.family))?;
    diffeomorphism_check(&sigma, p.seed, r)?;
    let h = PI / p.steps as f64;

    let (rep, ms) = r.compute("conditions (1.5)-(1.7)", || check_conditions(&sigma, p.geodesic_count, p.seed, h))?;
    for e in &rep.entries {
        r.push(
            title(e.name),
            anchor(e.name),
            ms,
            Verdict::new(e.satisfied, e.margin).with_detail(json!({
                "worst_geodesic": geodesic_json(&e.worst_geodesic),
                "worst_geodesic_id": e.worst_geodesic_id,
                "lip_b": rep.lip_b,
                "K": rep.k,
                "dimension_threshold": rep.dimension_threshold,
            })),
        );
    }

    let name = "comparison estimates along sampled geodesics";
    let mode = sigma.default_mode();
    let (per, ms) = r.compute(name, || {
        let v: Vec<nsg_core::Result<GronwallReport>> = (0..p.geodesic_count)
            .into_par_iter()
            .map(|i| Ok(gronwall_check(&curve_samples(&sigma, &sampled_geodesic(p.n, p.seed, i), h, mode)?)))
            .collect();
        v.into_iter().collect::<nsg_core::Result<Vec<_>>>()
    })?;
    let gronwall = per.iter().map(|g| g.rhs + g.tolerance - g.max_lhs).fold(f64::INFINITY, f64::min);
    r.push("Gronwall comparison |c - cbar| <= e^pi alpha-integral", "Lemma 3.2", ms, Verdict::new(per.iter().all(|g| g.holds), gronwall));
    let chain = per
        .iter()
        .map(|g| {
            let c = &g.chain;
            let inner = if c.inner_required { c.min_inner } else { f64::INFINITY };
            (c.base_slack + g.tolerance).min(c.velocity_slack + g.tolerance).min(c.speed_slack + g.tolerance).min(inner)
        })
        .fold(f64::INFINITY, f64::min);
    r.push("bound chain with alpha = e^pi alpha-integral", "Lemmas 3.3-3.5", ms, Verdict::new(per.iter().all(|g| g.chain.holds), chain));

    let tol = match mode {
        DerivativeMode::Analytic => 1e-6,
        DerivativeMode::FiniteDifference => 5.0 * h * h,
    };
    r.push(
        "curvature identity |c'' + c|^2 = |c''|^2 - 2|c'|^2 + 1",
        "Lemma 3.8",
        None,
        Verdict::new(rep.identity_residual <= tol, tol - rep.identity_residual).with_detail(json!({ "residual": rep.identity_residual, "tolerance": tol })),
    );
    let applies = ["1.5a", "1.5b"].iter().all(|n| rep.entry(n).is_some_and(|e| e.satisfied));
    r.push(
        "curvature conditions imply the alpha-condition",
        "Corollary 3.9",
        None,
        Verdict {
            satisfied: rep.alpha_implied,
            margin: applies.then_some(rep.alpha_threshold - rep.max_alpha_integral),
            detail: Some(json!({
                "applies": applies,
                "max_alpha_integral": rep.max_alpha_integral,
                "threshold": rep.alpha_threshold,
            })),
        },
    );

    let mut ids: Vec<usize> = rep.entries.iter().filter_map(|e| e.worst_geodesic_id).collect();
    ids.dedup();
    for id in ids {
        let (cs, _) = r.compute("curve samples", || curve_samples(&sigma, &sampled_geodesic(p.n, p.seed, id), h, mode))?;
        let defect = cs.curvature_defect();
        for (j, &t) in cs.t.iter().enumerate() {
            r.row(t, "curvature_defect", defect[j], Some(id), Some(p.seed));
            r.row(t, "comparison_inner", cs.cbar[j].dot(&cs.c[j]), Some(id), Some(p.seed));
            r.row(t, "acceleration_sq", cs.c_ddot[j].norm_squared(), Some(id), Some(p.seed));
        }
    }
    Ok(())
}
