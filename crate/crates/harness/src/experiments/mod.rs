//! The six experiment suites.

mod clarke;
mod extension;
mod gram;
mod mollify;
mod sigma;
mod twisted;

use nalgebra::DVector;
use nsg_core::geometry::GeodesicSegment;
use nsg_core::sphere_maps::{Profile, SphereMap, TangentField};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, FamilySpec, Parameters, ProfileSpec};
use crate::report::{CheckError, Runner};

pub fn dispatch(cfg: &ExperimentConfig, r: &mut Runner) -> Result<(), CheckError> {
    match &cfg.parameters {
        Parameters::Clarke(p) => clarke::run(p, r),
        Parameters::Mollify(p) => mollify::run(p, r),
        Parameters::Sigma(p) => sigma::run(p, r),
        Parameters::Extension(p) => extension::run(p, r),
        Parameters::Twisted(p) => twisted::run(p, r),
        Parameters::Gram(p) => gram::run(p, r),
    }
}

pub(crate) fn vector(c: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(c)
}

pub(crate) fn geodesic_json(g: &GeodesicSegment) -> Value {
    json!({ "base": g.base.as_slice(), "tangent": g.tangent.as_slice(), "length": g.length })
}

/// `None` for non-finite values, which JSON cannot carry.
pub(crate) fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub(crate) fn build_sigma(n: usize, family: &FamilySpec) -> nsg_core::Result<SphereMap> {
    match family {
        FamilySpec::Identity {} => SphereMap::identity(n),
        FamilySpec::Rotation { seed } => SphereMap::random_rotation(n, *seed),
        FamilySpec::LatitudeTwist { amplitude, profile } => {
            let profile = match profile {
                ProfileSpec::Linear => Profile::Linear,
                ProfileSpec::Sine => Profile::Sine,
                ProfileSpec::Cubic => Profile::Cubic,
            };
            SphereMap::latitude_twist(n, profile, *amplitude)
        }
        FamilySpec::NormalizedPerturbation { amplitude, field_seed } => {
            SphereMap::normalized_perturbation(n, TangentField::random_linear(n, *field_seed), *amplitude)
        }
    }
}

/// Smallest singular value of `d sigma` required of every tested map.
pub(crate) const DIFFEOMORPHISM_FLOOR: f64 = 0.1;

/// Records the diffeomorphism pre-check, failing the run (domain error) when
/// `d sigma` comes within [`DIFFEOMORPHISM_FLOOR`] of singular.
pub(crate) fn diffeomorphism_check(sigma: &SphereMap, seed: u64, r: &mut Runner) -> Result<(), CheckError> {
    let name = "sigma is a diffeomorphism";
    let (m, ms) = r.compute(name, || Ok(sigma.diffeomorphism_margin(2000, seed)))?;
    if !(m > DIFFEOMORPHISM_FLOOR) {
        return Err(CheckError {
            check: name.to_string(),
            message: format!("smallest singular value of d sigma is {m}, needs > {DIFFEOMORPHISM_FLOOR}"),
        });
    }
    r.push(name, "latitude-twist cap", ms, crate::report::Verdict::new(true, m - DIFFEOMORPHISM_FLOOR));
    Ok(())
}
