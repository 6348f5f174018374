//! Experiment configuration: one JSON document, checked field by field with
//! JSON-pointer diagnostics.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use cavity_spectra::eigensolve::{SolverOptions, DEFAULT_TOL};
use cavity_spectra::geometry::{gauss_rule, QuadratureRule, MAX_GAUSS_DEGREE};
use cavity_spectra::material::PermittivityField;

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Validate,
    Spectrum,
    DerivativeCheck,
    Branches,
    Split,
    Genericity,
    Lipschitz,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Validate => "validate",
            Kind::Spectrum => "spectrum",
            Kind::DerivativeCheck => "derivative-check",
            Kind::Branches => "branches",
            Kind::Split => "split",
            Kind::Genericity => "genericity",
            Kind::Lipschitz => "lipschitz",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub subdivisions: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermittivitySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Row-major 3×3 expressions in `x`, `y`, `z`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expressions: Option<[[String; 3]; 3]>,
}

/// A number, or `"calibrate"` for the per-mesh calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RMax {
    Value(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub solver_tol: f64,
    pub cluster_tol: f64,
    pub r_max: RMax,
    pub match_tol: f64,
    pub gap_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver_tol: DEFAULT_TOL,
            cluster_tol: 1e-3,
            r_max: RMax::Named("calibrate".into()),
            match_tol: 0.02,
            gap_min: 1e-3,
        }
    }
}

fn default_quadrature() -> usize {
    5
}

fn default_k() -> usize {
    12
}

fn default_params() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub domain: DomainSpec,
    pub mesh: MeshSpec,
    #[serde(default = "default_quadrature")]
    pub quadrature_degree: usize,
    pub permittivity: PermittivitySpec,
    pub tau: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    /// Kind-specific parameters; replaced by their resolved form (defaults
    /// filled in) once parsed.
    #[serde(default = "default_params")]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Direction η of a perturbation `ε + tη`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DirectionSpec {
    Identity,
    Constant {
        matrix: [[f64; 3]; 3],
    },
    /// `ξ e_hh` with `h` counted from 1; the bump defaults to the centered one.
    AxisBump {
        axis: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<[f64; 3]>,
    },
    DiagonalBump {
        weights: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<[f64; 3]>,
    },
    Expressions {
        entries: [[String; 3]; 3],
    },
    /// Unit-norm constant symmetric direction drawn from the config seed.
    RandomConstant,
    /// Entry of the splitting dictionary, counted from 0.
    Dictionary {
        index: usize,
    },
}

impl Default for DirectionSpec {
    fn default() -> Self {
        Self::Identity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    /// Run the τ-shift disambiguation.
    pub resolve: bool,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self { resolve: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DerivativeParams {
    pub direction: DirectionSpec,
    /// Number of leading Maxwell values whose clusters are checked.
    pub count: usize,
    pub t_coarse: f64,
    pub t_fine: f64,
}

impl Default for DerivativeParams {
    fn default() -> Self {
        Self { direction: DirectionSpec::Identity, count: 5, t_coarse: 1e-2, t_fine: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TGrid {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl TGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = self.steps;
        (0..=n).map(|i| self.start + (self.stop - self.start) * i as f64 / n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchParams {
    pub direction: DirectionSpec,
    pub t_grid: TGrid,
    /// Maxwell cluster to follow, counted from 0.
    pub cluster: usize,
    pub svg: bool,
}

impl Default for BranchParams {
    fn default() -> Self {
        Self {
            direction: DirectionSpec::DiagonalBump { weights: [1.0, 0.6, 0.3], center: None, radius: None },
            t_grid: TGrid { start: -0.01, stop: 0.01, steps: 8 },
            cluster: 0,
            svg: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dictionary {
    Diagonal,
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitParams {
    pub cluster: usize,
    pub dictionary: Dictionary,
    pub t_max: f64,
    pub max_doublings: usize,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self { cluster: 0, dictionary: Dictionary::Diagonal, t_max: 0.1, max_doublings: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenericityParams {
    pub n: usize,
    pub delta: f64,
    pub budget: usize,
}

impl Default for GenericityParams {
    fn default() -> Self {
        Self { n: 5, delta: 0.1, budget: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LipschitzParams {
    /// Random pairs within `radius` of the base permittivity.
    pub pairs: usize,
    pub radius: f64,
    /// Eigenvalue indices, counted from 1.
    pub indices: Vec<usize>,
    /// Distances of the nested pairs along each direction.
    pub nested: Vec<f64>,
    pub directions: Vec<DirectionSpec>,
}

impl Default for LipschitzParams {
    fn default() -> Self {
        Self {
            pairs: 50,
            radius: 0.1,
            indices: vec![1, 3, 5],
            nested: vec![1e-1, 1e-2, 1e-3, 1e-4],
            directions: vec![
                DirectionSpec::Identity,
                DirectionSpec::DiagonalBump { weights: [1.0, 0.6, 0.3], center: None, radius: None },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Validate(ValidateParams),
    Spectrum(SpectrumParams),
    Derivative(DerivativeParams),
    Branches(BranchParams),
    Split(SplitParams),
    Genericity(GenericityParams),
    Lipschitz(LipschitzParams),
}

/// A validated config with its parameters parsed.
#[derive(Debug, Clone)]
pub struct Resolved {
    /// The document with defaults filled in, as embedded in reports.
    pub config: ExperimentConfig,
    pub params: Params,
    pub extent: [f64; 3],
    pub eps: PermittivityField,
    pub rule: QuadratureRule,
}

impl Resolved {
    pub fn solver(&self) -> SolverOptions {
        SolverOptions::with_tol(self.config.tolerances.solver_tol)
    }
}

pub const DOMAIN_PRESETS: [(&str, &str); 2] =
    [("cube-pi", "cube (0,π)³"), ("box-anisotropic", "box (0,π)×(0,1.1π)×(0,1.3π)")];

pub const PERMITTIVITY_PRESETS: [(&str, &str); 3] = [
    ("eps-identity", "ε = I"),
    ("eps-diag", "ε = diag(1, 1.5, 2)"),
    ("eps-sine", "smooth anisotropic field with sine entries and off-diagonal coupling"),
];

pub fn domain_preset(name: &str) -> Option<[f64; 3]> {
    match name {
        "cube-pi" => Some([PI; 3]),
        "box-anisotropic" => Some([PI, 1.1 * PI, 1.3 * PI]),
        _ => None,
    }
}

pub const SINE_FIELD: [[&str; 3]; 3] = [
    ["1.2 + 0.2*sin(x)", "0.1*sin(y)", "0"],
    ["0.1*sin(y)", "1 + 0.1*cos(z)", "0.05*sin(x + z)"],
    ["0", "0.05*sin(x + z)", "1.1 + 0.1*sin(y)"],
];

pub fn permittivity_preset(name: &str) -> Option<PermittivityField> {
    match name {
        "eps-identity" => Some(PermittivityField::identity()),
        "eps-diag" => Some(PermittivityField::diag([1.0, 1.5, 2.0])),
        "eps-sine" => PermittivityField::from_sources(&SINE_FIELD).ok(),
        _ => None,
    }
}

/// JSON pointer for a serde path such as `tolerances.r_max` or `mesh.subdivisions[1]`.
fn pointer_of(path: &str) -> String {
    if path == "." || path.is_empty() {
        return String::new();
    }
    let mut out = String::new();
    for seg in path.split('.') {
        let (name, rest) = seg.split_once('[').map_or((seg, ""), |(n, r)| (n, r));
        if !name.is_empty() {
            out.push('/');
            out.push_str(&name.replace('~', "~0").replace('/', "~1"));
        }
        for idx in rest.split('[') {
            let idx = idx.trim_end_matches(']');
            if !idx.is_empty() {
                out.push('/');
                out.push_str(idx);
            }
        }
    }
    out
}

/// Deserializes with diagnostics rooted at `prefix`. A missing field is
/// reported at the pointer it should have had.
fn from_value<T: DeserializeOwned>(value: Value, prefix: &str) -> LabResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let mut pointer = format!("{prefix}{}", pointer_of(&e.path().to_string()));
        let message = e.inner().to_string();
        if let Some(field) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            pointer = format!("{pointer}/{field}");
        }
        if pointer.is_empty() {
            pointer = "/".into();
        }
        LabError::config(pointer, message)
    })
}

fn positive(value: f64, pointer: &str) -> LabResult<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(LabError::config(pointer, format!("must be positive and finite, got {value}")))
    }
}

fn bump_checks(center: &Option<[f64; 3]>, radius: &Option<[f64; 3]>, pointer: &str) -> LabResult<()> {
    if center.is_some() != radius.is_some() {
        return Err(LabError::config(pointer, "give both center and radius, or neither"));
    }
    Ok(())
}

fn check_direction(d: &DirectionSpec, pointer: &str) -> LabResult<()> {
    match d {
        DirectionSpec::AxisBump { axis, center, radius } => {
            if !(1..=3).contains(axis) {
                return Err(LabError::config(format!("{pointer}/axis"), format!("axis is 1, 2 or 3, got {axis}")));
            }
            bump_checks(center, radius, pointer)
        }
        DirectionSpec::DiagonalBump { center, radius, .. } => bump_checks(center, radius, pointer),
        DirectionSpec::Constant { matrix } => {
            for i in 0..3 {
                for j in 0..3 {
                    if matrix[i][j] != matrix[j][i] {
                        return Err(LabError::config(format!("{pointer}/matrix/{i}/{j}"), "matrix must be symmetric"));
                    }
                }
            }
            Ok(())
        }
        DirectionSpec::Expressions { entries } => parse_field(entries, &format!("{pointer}/entries")).map(|_| ()),
        _ => Ok(()),
    }
}

fn parse_field(entries: &[[String; 3]; 3], pointer: &str) -> LabResult<PermittivityField> {
    for i in 0..3 {
        for j in 0..3 {
            if let Err(e) = cavity_spectra::material::Expr::parse(&entries[i][j]) {
                return Err(LabError::config(format!("{pointer}/{i}/{j}"), e.to_string()));
            }
        }
    }
    let refs: [[&str; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| entries[i][j].as_str()));
    PermittivityField::from_sources(&refs).map_err(|e| LabError::config(pointer, e.to_string()))
}

/// Parses and checks a config document.
pub fn resolve(doc: Value) -> LabResult<Resolved> {
    if !doc.is_object() {
        return Err(LabError::config("/", "config must be a JSON object"));
    }
    let mut config: ExperimentConfig = from_value(doc, "")?;

    let extent = match (&config.domain.preset, config.domain.extent) {
        (Some(name), None) => domain_preset(name)
            .ok_or_else(|| LabError::config("/domain/preset", format!("unknown domain preset `{name}`")))?,
        (None, Some(e)) => {
            for (i, v) in e.iter().enumerate() {
                positive(*v, &format!("/domain/extent/{i}"))?;
            }
            e
        }
        _ => return Err(LabError::config("/domain", "give exactly one of `preset` or `extent`")),
    };
    for (i, &n) in config.mesh.subdivisions.iter().enumerate() {
        if n == 0 {
            return Err(LabError::config(format!("/mesh/subdivisions/{i}"), "subdivisions must be at least 1"));
        }
    }
    if config.quadrature_degree == 0 || config.quadrature_degree > MAX_GAUSS_DEGREE {
        return Err(LabError::config(
            "/quadrature_degree",
            format!("degree must be in 1..={MAX_GAUSS_DEGREE}, got {}", config.quadrature_degree),
        ));
    }
    let rule =
        gauss_rule(config.quadrature_degree).map_err(|e| LabError::config("/quadrature_degree", e.to_string()))?;
    let eps = match (&config.permittivity.preset, &config.permittivity.expressions) {
        (Some(name), None) => permittivity_preset(name)
            .ok_or_else(|| LabError::config("/permittivity/preset", format!("unknown permittivity preset `{name}`")))?,
        (None, Some(e)) => parse_field(e, "/permittivity/expressions")?,
        _ => return Err(LabError::config("/permittivity", "give exactly one of `preset` or `expressions`")),
    };
    positive(config.tau, "/tau")?;
    if config.k == 0 {
        return Err(LabError::config("/k", "k must be at least 1"));
    }
    let t = &config.tolerances;
    positive(t.solver_tol, "/tolerances/solver_tol")?;
    positive(t.cluster_tol, "/tolerances/cluster_tol")?;
    positive(t.match_tol, "/tolerances/match_tol")?;
    positive(t.gap_min, "/tolerances/gap_min")?;
    match &t.r_max {
        RMax::Value(v) => positive(*v, "/tolerances/r_max")?,
        RMax::Named(s) if s == "calibrate" => {}
        RMax::Named(s) => {
            return Err(LabError::config("/tolerances/r_max", format!("expected a number or \"calibrate\", got `{s}`")))
        }
    }
    if !config.params.is_object() {
        return Err(LabError::config("/params", "params must be a JSON object"));
    }

    let raw = config.params.clone();
    let params = match config.kind {
        Kind::Validate => {
            if config.permittivity.preset.as_deref() != Some("eps-identity") {
                return Err(LabError::config("/permittivity", "validation oracles need the eps-identity preset"));
            }
            Params::Validate(from_value(raw, "/params")?)
        }
        Kind::Spectrum => Params::Spectrum(from_value(raw, "/params")?),
        Kind::DerivativeCheck => {
            let p: DerivativeParams = from_value(raw, "/params")?;
            check_direction(&p.direction, "/params/direction")?;
            if p.count == 0 {
                return Err(LabError::config("/params/count", "count must be at least 1"));
            }
            positive(p.t_coarse, "/params/t_coarse")?;
            positive(p.t_fine, "/params/t_fine")?;
            if p.t_fine >= p.t_coarse {
                return Err(LabError::config("/params/t_fine", "t_fine must be below t_coarse"));
            }
            Params::Derivative(p)
        }
        Kind::Branches => {
            let p: BranchParams = from_value(raw, "/params")?;
            check_direction(&p.direction, "/params/direction")?;
            if p.t_grid.steps == 0 || !(p.t_grid.stop > p.t_grid.start) {
                return Err(LabError::config("/params/t_grid", "need stop > start and at least one step"));
            }
            Params::Branches(p)
        }
        Kind::Split => {
            let p: SplitParams = from_value(raw, "/params")?;
            positive(p.t_max, "/params/t_max")?;
            Params::Split(p)
        }
        Kind::Genericity => {
            let p: GenericityParams = from_value(raw, "/params")?;
            if p.n == 0 {
                return Err(LabError::config("/params/n", "n must be at least 1"));
            }
            positive(p.delta, "/params/delta")?;
            Params::Genericity(p)
        }
        Kind::Lipschitz => {
            let p: LipschitzParams = from_value(raw, "/params")?;
            positive(p.radius, "/params/radius")?;
            for (i, &j) in p.indices.iter().enumerate() {
                if j == 0 {
                    return Err(LabError::config(format!("/params/indices/{i}"), "indices are counted from 1"));
                }
            }
            for (i, &d) in p.nested.iter().enumerate() {
                positive(d, &format!("/params/nested/{i}"))?;
            }
            for (i, d) in p.directions.iter().enumerate() {
                check_direction(d, &format!("/params/directions/{i}"))?;
            }
            Params::Lipschitz(p)
        }
    };
    config.params = serde_json::to_value(&params).expect("params serialize");
    Ok(Resolved { config, params, extent, eps, rule })
}

/// Reads and resolves a config file; unreadable or malformed files are
/// config errors.
pub fn load(path: &std::path::Path) -> LabResult<Resolved> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::config("/", format!("cannot read {}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| LabError::config("/", format!("invalid JSON at line {} column {}: {e}", e.line(), e.column())))?;
    resolve(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> Value {
        json!({
            "kind": "spectrum",
            "domain": {"preset": "cube-pi"},
            "mesh": {"subdivisions": [3, 3, 3]},
            "permittivity": {"preset": "eps-identity"},
            "tau": 1.0
        })
    }

    fn pointer(doc: Value) -> String {
        match resolve(doc) {
            Err(LabError::Config { pointer, .. }) => pointer,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_are_filled_in() {
        let r = resolve(base()).unwrap();
        assert_eq!(r.config.k, 12);
        assert_eq!(r.config.quadrature_degree, 5);
        assert_eq!(r.config.params, json!({"resolve": true}));
        assert_eq!(r.extent, [PI; 3]);
    }

    #[test]
    fn pointers_name_the_offending_field() {
        let mut d = base();
        d.as_object_mut().unwrap().remove("tau");
        assert_eq!(pointer(d), "/tau");

        let mut d = base();
        d["kind"] = json!("spectra");
        assert_eq!(pointer(d), "/kind");

        let mut d = base();
        d["mesh"]["subdivisions"][1] = json!(0);
        assert_eq!(pointer(d), "/mesh/subdivisions/1");

        let mut d = base();
        d["tolerances"] = json!({"cluster_tol": -1.0});
        assert_eq!(pointer(d), "/tolerances/cluster_tol");

        let mut d = base();
        d["permittivity"] = json!({"expressions": [["1", "0", "0"], ["0", "1 +", "0"], ["0", "0", "1"]]});
        assert_eq!(pointer(d), "/permittivity/expressions/1/1");

        let mut d = base();
        d["kind"] = json!("derivative-check");
        d["params"] = json!({"direction": {"type": "axis-bump", "axis": 4}});
        assert_eq!(pointer(d), "/params/direction/axis");

        let mut d = base();
        d["kind"] = json!("branches");
        d["params"] = json!({"t_grid": {"start": 0.0, "stop": 1.0}});
        assert_eq!(pointer(d), "/params/t_grid/steps");
    }

    #[test]
    fn unknown_fields_and_presets_are_rejected() {
        let mut d = base();
        d["tua"] = json!(1.0);
        assert!(resolve(d).is_err());

        let mut d = base();
        d["domain"] = json!({"preset": "sphere"});
        assert_eq!(pointer(d), "/domain/preset");

        let mut d = base();
        d["kind"] = json!("validate");
        d["permittivity"] = json!({"preset": "eps-diag"});
        assert_eq!(pointer(d), "/permittivity");
    }

    #[test]
    fn presets_resolve() {
        for (name, _) in DOMAIN_PRESETS {
            assert!(domain_preset(name).is_some());
        }
        for (name, _) in PERMITTIVITY_PRESETS {
            assert!(permittivity_preset(name).is_some(), "{name}");
        }
    }

    #[test]
    fn grid_points_include_both_ends() {
        let g = TGrid { start: -1.0, stop: 1.0, steps: 4 };
        assert_eq!(g.points(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }
}
