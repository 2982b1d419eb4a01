//! Experiment configuration files.
//!
//! A config is a JSON object with an `experiment` name, a `parameters`
//! object whose schema depends on the experiment, and optional `output`
//! paths. Unknown keys are rejected at every level and every seed must be
//! given explicitly.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ClarkeExamples,
    MollifyBounds,
    SigmaConditions,
    ExtensionCertificates,
    TwistedHypotheses,
    GramDependence,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::ClarkeExamples,
        Self::MollifyBounds,
        Self::SigmaConditions,
        Self::ExtensionCertificates,
        Self::TwistedHypotheses,
        Self::GramDependence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::ClarkeExamples => "clarke-examples",
            Self::MollifyBounds => "mollify-bounds",
            Self::SigmaConditions => "sigma-conditions",
            Self::ExtensionCertificates => "extension-certificates",
            Self::TwistedHypotheses => "twisted-hypotheses",
            Self::GramDependence => "gram-dependence",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Self::ClarkeExamples => "sampled generalized gradients and differentials (Example 1.6, Example 1.7)",
            Self::MollifyBounds => "mollifier sup-error and obtuse smoothed gradients (Lemma lemN5, Lemma lemN12)",
            Self::SigmaConditions => "checks (1.5)/(1.6)/(1.7) with Lemmas 3.2-3.5, 3.8 and Corollary 3.9",
            Self::ExtensionCertificates => "radial extension non-singularity and bi-Lipschitz sandwich (Theorem 3.1, Lemma 3.10)",
            Self::TwistedHypotheses => "critical points and bisector angles for (1.8)/(1.9)",
            Self::GramDependence => "§3.4 construction and Lemma 4.2 hyperplane margins",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: ExperimentKind,
    parameters: serde_json::Value,
    #[serde(default)]
    output: OutputPaths,
}

/// A validated configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub parameters: Parameters,
    #[serde(skip_serializing_if = "is_default_output")]
    pub output: OutputPaths,
}

fn is_default_output(o: &OutputPaths) -> bool {
    o.report.is_none() && o.csv.is_none()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Parameters {
    Clarke(ClarkeParams),
    Mollify(MollifyParams),
    Sigma(SigmaParams),
    Extension(ExtensionParams),
    Twisted(TwistedParams),
    Gram(GramParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClarkeParams {
    pub seed: u64,
    /// Sampling radii are `{1e-1, 1e-2, 1e-3} * radius_scale`.
    #[serde(default = "d_radius_scale")]
    pub radius_scale: f64,
    #[serde(default = "d_per_radius")]
    pub per_radius: usize,
    /// Points at which `max(x^2, x + 2)` is classified.
    #[serde(default = "d_clarke_points")]
    pub points: Vec<f64>,
    /// Random hull combinations for the non-singularity margin.
    #[serde(default = "d_hull_count")]
    pub hull_count: usize,
    /// Allowed error on sampled interval endpoints.
    #[serde(default = "d_interval_tol")]
    pub interval_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifoldKind {
    Sphere,
    FlatTorus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    /// Intrinsic dimension.
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObtuseParams {
    pub q: Vec<f64>,
    /// Latitude half-width of the sphere band (sphere only).
    pub band: f64,
    pub rows: usize,
    pub cols: usize,
    pub epsilon: f64,
    /// Required excess of the smallest angle over `pi/2`.
    #[serde(default)]
    pub min_excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifyParams {
    pub manifold: ManifoldSpec,
    pub p: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Points per axis (torus) or rows and columns (sphere).
    pub grid: usize,
    /// Seed of the Monte Carlo quadrature (used in dimensions 4-5 only).
    pub quadrature_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obtuse: Option<ObtuseParams>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileSpec {
    #[default]
    Linear,
    Sine,
    Cubic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Identity {},
    Rotation { seed: u64 },
    LatitudeTwist {
        amplitude: f64,
        #[serde(default)]
        profile: ProfileSpec,
    },
    NormalizedPerturbation { amplitude: f64, field_seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaParams {
    /// Ambient dimension: sigma maps `S^{n-1}` to itself.
    pub n: usize,
    pub family: FamilySpec,
    pub seed: u64,
    #[serde(default = "d_geodesics")]
    pub geodesic_count: usize,
    /// Grid steps on `[0, pi]`; `h = pi / steps`.
    #[serde(default = "d_steps")]
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionParams {
    pub n: usize,
    pub family: FamilySpec,
    pub seed: u64,
    #[serde(default = "d_geodesics")]
    pub sample_count: usize,
    #[serde(default = "d_extension_hull")]
    pub hull_count: usize,
    #[serde(default = "d_bilip_pairs")]
    pub bilip_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwistedParams {
    pub manifold: ManifoldSpec,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Points per axis (torus) or rows and columns (sphere).
    pub grid: usize,
    #[serde(default = "d_twisted_tol")]
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramParams {
    #[serde(default = "d_gram_eps")]
    pub epsilons: Vec<f64>,
    pub seed: u64,
    /// Random valid `(A, B)` pairs for the hyperplane margin.
    #[serde(default = "d_hyperplane_pairs")]
    pub hyperplane_pairs: usize,
    #[serde(default = "d_hyperplane_grid")]
    pub hyperplane_grid: usize,
}

fn d_radius_scale() -> f64 {
    0.1
}
fn d_per_radius() -> usize {
    64
}
fn d_clarke_points() -> Vec<f64> {
    vec![-1.5, -1.0, 0.0, 2.0, 2.5]
}
fn d_hull_count() -> usize {
    10_000
}
fn d_interval_tol() -> f64 {
    0.02
}
fn d_geodesics() -> usize {
    256
}
fn d_steps() -> usize {
    512
}
fn d_extension_hull() -> usize {
    1000
}
fn d_bilip_pairs() -> usize {
    100_000
}
fn d_twisted_tol() -> f64 {
    1e-6
}
fn d_gram_eps() -> Vec<f64> {
    vec![0.5, 0.3, 0.1]
}
fn d_hyperplane_pairs() -> usize {
    100
}
fn d_hyperplane_grid() -> usize {
    100
}

/// Why a config was rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Offending key, when one can be named.
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "invalid config key `{k}`: {}", self.message),
            None => write!(f, "invalid config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { key: Some(key.to_string()), message: message.into() }
}

/// Pulls the key name out of serde messages like "unknown field `x`" or
/// "missing field `seed`".
fn serde_error(prefix: &str, e: serde_json::Error) -> ConfigError {
    let msg = e.to_string();
    let key = msg.split('`').nth(1).filter(|_| msg.contains("field")).map(|k| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    });
    ConfigError { key: key.or_else(|| (!prefix.is_empty()).then(|| prefix.to_string())), message: msg }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| serde_error("", e))?;
        let p = raw.parameters;
        let parameters = match raw.experiment {
            ExperimentKind::ClarkeExamples => Parameters::Clarke(parse(p)?),
            ExperimentKind::MollifyBounds => Parameters::Mollify(parse(p)?),
            ExperimentKind::SigmaConditions => Parameters::Sigma(parse(p)?),
            ExperimentKind::ExtensionCertificates => Parameters::Extension(parse(p)?),
            ExperimentKind::TwistedHypotheses => Parameters::Twisted(parse(p)?),
            ExperimentKind::GramDependence => Parameters::Gram(parse(p)?),
        };
        let cfg = Self { experiment: raw.experiment, parameters, output: raw.output };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { key: None, message: format!("cannot read {}: {e}", path.display()) })?;
        Self::from_json(&text)
    }

    /// Range checks that serde cannot express.
    fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(invalid(key, format!("must be positive, got {v}"))) };
        let nonzero = |key: &str, v: usize| if v > 0 { Ok(()) } else { Err(invalid(key, "must be at least 1")) };
        match &self.parameters {
            Parameters::Clarke(c) => {
                positive("parameters.radius_scale", c.radius_scale)?;
                positive("parameters.interval_tol", c.interval_tol)?;
                nonzero("parameters.per_radius", c.per_radius)?;
            }
            Parameters::Mollify(m) => {
                check_manifold(&m.manifold, &m.p, "parameters.p")?;
                if m.epsilons.is_empty() {
                    return Err(invalid("parameters.epsilons", "must not be empty"));
                }
                for e in &m.epsilons {
                    positive("parameters.epsilons", *e)?;
                }
                nonzero("parameters.grid", m.grid)?;
                if let Some(o) = &m.obtuse {
                    if m.manifold.kind != ManifoldKind::Sphere {
                        return Err(invalid("parameters.obtuse", "the obtuse-gradient check runs on the sphere only"));
                    }
                    check_manifold(&m.manifold, &o.q, "parameters.obtuse.q")?;
                    positive("parameters.obtuse.epsilon", o.epsilon)?;
                    nonzero("parameters.obtuse.rows", o.rows)?;
                    nonzero("parameters.obtuse.cols", o.cols)?;
                }
            }
            Parameters::Sigma(s) => {
                check_family(s.n, &s.family)?;
                nonzero("parameters.geodesic_count", s.geodesic_count)?;
                if s.steps < 64 {
                    return Err(invalid("parameters.steps", "must be at least 64"));
                }
            }
            Parameters::Extension(e) => {
                check_family(e.n, &e.family)?;
                nonzero("parameters.sample_count", e.sample_count)?;
                nonzero("parameters.bilip_pairs", e.bilip_pairs)?;
            }
            Parameters::Twisted(t) => {
                check_manifold(&t.manifold, &t.p, "parameters.p")?;
                check_manifold(&t.manifold, &t.q, "parameters.q")?;
                nonzero("parameters.grid", t.grid)?;
                positive("parameters.tol", t.tol)?;
            }
            Parameters::Gram(g) => {
                for e in &g.epsilons {
                    if !(*e > 0.0 && *e < 1.0) {
                        return Err(invalid("parameters.epsilons", format!("entries must lie in (0, 1), got {e}")));
                    }
                }
                nonzero("parameters.hyperplane_grid", g.hyperplane_grid)?;
            }
        }
        Ok(())
    }
}

fn parse<T: for<'de> Deserialize<'de>>(v: serde_json::Value) -> Result<T, ConfigError> {
    serde_json::from_value(v).map_err(|e| serde_error("parameters", e))
}

fn check_manifold(m: &ManifoldSpec, point: &[f64], key: &str) -> Result<(), ConfigError> {
    match m.kind {
        ManifoldKind::Sphere => {
            if m.dim != 2 {
                return Err(invalid("parameters.manifold.dim", "sphere experiments support S^2 only"));
            }
            if point.len() != 3 {
                return Err(invalid(key, "sphere points need 3 coordinates"));
            }
            let norm = point.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(invalid(key, format!("sphere point has norm {norm}")));
            }
        }
        ManifoldKind::FlatTorus => {
            if !(1..=3).contains(&m.dim) {
                return Err(invalid("parameters.manifold.dim", "flat tori of dimension 1-3 are supported"));
            }
            if point.len() != m.dim {
                return Err(invalid(key, format!("torus points need {} coordinates", m.dim)));
            }
        }
    }
    Ok(())
}

fn check_family(n: usize, f: &FamilySpec) -> Result<(), ConfigError> {
    if n < 2 {
        return Err(invalid("parameters.n", "ambient dimension must be at least 2"));
    }
    match f {
        FamilySpec::LatitudeTwist { amplitude, .. } => {
            if n < 3 {
                return Err(invalid("parameters.n", "latitude twist needs n >= 3"));
            }
            if !amplitude.is_finite() {
                return Err(invalid("parameters.family.amplitude", "must be finite"));
            }
        }
        FamilySpec::NormalizedPerturbation { amplitude, .. } if !amplitude.is_finite() => {
            return Err(invalid("parameters.family.amplitude", "must be finite"));
        }
        _ => {}
    }
    Ok(())
}
