use nsg_core::sphere_maps::*;
use rayon::prelude::*;
use serde_json::json;

use super::{build_sigma, diffeomorphism_check};
use crate::config::ExtensionParams;
use crate::report::{CheckError, Runner, Verdict};

pub fn run(p: &ExtensionParams, r: &mut Runner) -> Result<(), CheckError> {
    let (sigma, _) = r.compute("sphere map", || build_sigma(p.n, &p.family))?;
    diffeomorphism_check(&sigma, p.seed, r)?;
    let threshold = alpha_threshold();
    let mode = sigma.default_mode();

    let name = "alpha-integral below e^-pi (1 - 1/sqrt 2)";
    let (alpha, ms) = r.compute(name, || {
        let v: Vec<nsg_core::Result<f64>> = (0..p.sample_count)
            .into_par_iter()
            .map(|i| Ok(alpha_integral(&curve_samples(&sigma, &sampled_geodesic(p.n, p.seed, i), DEFAULT_STEP, mode)?)))
            .collect();
        v.into_iter().try_fold(0.0f64, |acc, a| Ok(acc.max(a?)))
    })?;
    r.push(name, "(3.1)", ms, Verdict::new(alpha <= threshold, threshold - alpha).with_detail(json!({ "max_alpha_integral": alpha, "threshold": threshold })));

    let name = "radial extension non-singular at the origin";
    let (m, ms) = r.compute(name, || extension_nonsingularity_margin(&sigma, p.sample_count, p.hull_count, p.seed))?;
    r.push(
        name,
        "Theorem 3.1",
        ms,
        Verdict::new(m.margin > 0.0, m.margin).with_detail(json!({
            "hull_min_singular": m.hull_min_singular,
            "worst_v": m.worst_v.as_slice(),
            "worst_u": m.worst_u.as_slice(),
            "worst_geodesic_id": m.worst_geodesic_id,
            "pairs": m.pairs,
        })),
    );
    r.push(
        "alpha-condition certifies the origin",
        "Theorem 3.1",
        None,
        Verdict {
            satisfied: alpha > threshold || m.margin > 0.0,
            // Vacuous when the alpha-condition fails: no margin to report.
            margin: (alpha <= threshold).then_some(m.margin),
            detail: Some(json!({ "applies": alpha <= threshold })),
        },
    );
    let (cs, _) = r.compute("curve samples", || curve_samples(&sigma, &sampled_geodesic(p.n, p.seed, m.worst_geodesic_id), DEFAULT_STEP, mode))?;
    for (t, (b, c)) in cs.t.iter().zip(cs.cbar.iter().zip(&cs.c)) {
        r.row(*t, "comparison_inner", b.dot(c), Some(m.worst_geodesic_id), Some(p.seed));
    }

    let name = "bi-Lipschitz sandwich for the radial extension";
    let (rep, ms) = r.compute(name, || {
        let lip = bilip_estimate(&sigma, p.bilip_pairs, p.seed, true)?;
        extension_bilip_check(&sigma, lip, p.bilip_pairs, p.seed.wrapping_add(1))
    })?;
    let margin = (rep.worst_lower - (1.0 / rep.lip_b - 1e-6)).min(rep.lip_b + 1e-6 - rep.worst_upper);
    r.push(
        name,
        "Lemma 3.10",
        ms,
        Verdict::new(rep.holds, margin).with_detail(json!({
            "lip_b": rep.lip_b,
            "worst_upper": rep.worst_upper,
            "worst_lower": rep.worst_lower,
            "reestimated": rep.reestimated,
        })),
    );
    let name = "inner-product deviation bound";
    let lip = rep.lip_b;
    let (slack, ms) = r.compute(name, || inner_product_deviation_slack(&sigma, lip, (p.bilip_pairs / 5).max(1), p.seed.wrapping_add(2)))?;
    r.push(name, "§3.4", ms, Verdict::new(slack >= -1e-12, slack));
    Ok(())
}
