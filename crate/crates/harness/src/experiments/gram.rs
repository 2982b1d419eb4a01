use nalgebra::DMatrix;
use nsg_core::geometry::*;
use rand::Rng;
use serde_json::json;

use crate::config::GramParams;
use crate::report::{CheckError, Runner, Verdict};

pub fn run(p: &GramParams, r: &mut Runner) -> Result<(), CheckError> {
    for &eps in &p.epsilons {
        let name = format!("near-orthonormal dependent family at epsilon = {eps}");
        r.check(&name, "§3.4", || {
            let k = near_orthonormal_count(eps)?;
            let vs = near_orthonormal_dependent(eps)?;
            let dev = gram_deviation(&vs);
            let rank = numerical_rank(&DMatrix::from_columns(&vs));
            Ok(Verdict::new(dev < eps && rank == k, eps - dev).with_detail(json!({
                "vectors": vs.len(),
                "k": k,
                "rank": rank,
                "gram_deviation": dev,
            })))
        })?;
    }

    if p.hyperplane_pairs > 0 {
        r.check("convex combinations fixing a hyperplane stay non-singular", "Lemma 4.2", || {
            let mut worst = f64::INFINITY;
            for i in 0..p.hyperplane_pairs {
                let mut rng = item_rng(p.seed, i as u64);
                let n = 2 + i % 4;
                let mut make = || {
                    let mut m = DMatrix::<f64>::identity(n, n);
                    for row in 0..n - 1 {
                        m[(row, n - 1)] = rng.random_range(-3.0..3.0);
                    }
                    m[(n - 1, n - 1)] = rng.random_range(0.05..3.0);
                    m
                };
                let (a, b) = (make(), make());
                worst = worst.min(hyperplane_convex_rank_margin(&a, &b, p.hyperplane_grid)?);
            }
            Ok(Verdict::new(worst > 0.0, worst).with_detail(json!({ "pairs": p.hyperplane_pairs, "dimensions": "2-5" })))
        })?;
    }
    Ok(())
}
