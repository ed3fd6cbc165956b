//! JSON run configuration.
//!
//! A single document with `scenario`, `model`, `solver`, `output`, `adapt`
//! and `compare` sections. Every field has a default, so `{}` is a complete
//! configuration (the force-driven Bingham cavity at its standard
//! parameters). Unknown or ill-typed fields are rejected with the offending
//! path in the message. CLI `--set path.to.field=value` overrides are applied
//! to the raw document before deserialisation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::AdaptConfig;
use crate::constitutive::{ConstitutiveModel, ModelKind};
use crate::optim::{Algorithm, SolverConfig};
use crate::scenario::{BodyForce, BoundaryVelocities, Scenario, ScenarioKind};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigDoc {
    pub scenario: ScenarioSection,
    pub model: ModelSection,
    pub solver: SolverConfig,
    pub output: OutputSection,
    pub adapt: AdaptConfig,
    pub compare: CompareSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    pub n: usize,
    /// Body force; defaults to the standard forcing of the selected kind.
    pub force: Option<BodyForce>,
    /// Per-side boundary velocities; defaults per kind.
    pub boundary: Option<BoundaryVelocities>,
    /// Reference solution file for per-iteration error reporting.
    pub reference: Option<PathBuf>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            kind: ScenarioKind::ForceDriven,
            n: 32,
            force: None,
            boundary: None,
            reference: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub bi: f64,
    /// Shear-thinning exponent; only used by the Herschel-Bulkley model.
    pub r: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { kind: ModelKind::Bingham, bi: 10.0 * 2.0f64.sqrt(), r: 1.5 }
    }
}

impl ModelSection {
    pub fn build(&self) -> Result<ConstitutiveModel> {
        ConstitutiveModel::new(self.kind, self.bi, self.r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub csv: bool,
    pub vtk: bool,
    /// Half-width of the yield-surface visualisation window, relative to Bi.
    pub window_fraction: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), csv: true, vtk: true, window_fraction: 1e-3 }
    }
}

/// Algorithm selector for comparison runs; restarting is a separate entry
/// because it changes the iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareAlgorithm {
    Alg2,
    IstaStar,
    FistaStar,
    FistaStarRestart,
}

impl CompareAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            CompareAlgorithm::Alg2 => "alg2",
            CompareAlgorithm::IstaStar => "ista_star",
            CompareAlgorithm::FistaStar => "fista_star",
            CompareAlgorithm::FistaStarRestart => "fista_star_restart",
        }
    }

    /// Solver configuration for this entry, everything else from `base`.
    pub fn configure(&self, base: &SolverConfig) -> SolverConfig {
        let (algorithm, restart) = match self {
            CompareAlgorithm::Alg2 => (Algorithm::Alg2, false),
            CompareAlgorithm::IstaStar => (Algorithm::IstaStar, false),
            CompareAlgorithm::FistaStar => (Algorithm::FistaStar, false),
            CompareAlgorithm::FistaStarRestart => (Algorithm::FistaStar, true),
        };
        SolverConfig { algorithm, restart, ..*base }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub algorithms: Vec<CompareAlgorithm>,
    /// Bingham numbers of the grid.
    pub bi: Vec<f64>,
    /// Mesh subdivisions of the grid.
    pub n: Vec<usize>,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            algorithms: vec![
                CompareAlgorithm::Alg2,
                CompareAlgorithm::IstaStar,
                CompareAlgorithm::FistaStar,
                CompareAlgorithm::FistaStarRestart,
            ],
            bi: vec![2.0, 20.0],
            n: vec![16, 32],
        }
    }
}

impl ConfigDoc {
    /// Instantiates the scenario with per-kind defaults for force and
    /// boundary data.
    pub fn build_scenario(&self) -> Result<Scenario> {
        self.build_scenario_with(self.model.bi, self.scenario.n)
    }

    /// Same, overriding the Bingham number and mesh size (comparison grids).
    pub fn build_scenario_with(&self, bi: f64, n: usize) -> Result<Scenario> {
        let model = ConstitutiveModel::new(self.model.kind, bi, self.model.r)?;
        let mut scenario = match self.scenario.kind {
            ScenarioKind::ForceDriven => Scenario::force_driven(model, n),
            ScenarioKind::LidDriven => Scenario::lid_driven(model, n),
            ScenarioKind::Custom => Scenario {
                kind: ScenarioKind::Custom,
                n,
                model,
                body_force: BodyForce::Zero,
                boundary: BoundaryVelocities::default(),
                reference: None,
            },
        };
        if let Some(force) = self.scenario.force {
            scenario.body_force = force;
        }
        if let Some(boundary) = self.scenario.boundary {
            scenario.boundary = boundary;
        }
        scenario.reference = self.scenario.reference.clone();
        scenario.validate()?;
        if !(self.solver.grad_tol > 0.0) {
            return Err(Error::InvalidConfig("solver.grad_tol: must be positive".into()));
        }
        self.solver.validate()?;
        Ok(scenario)
    }
}

/// Parses a configuration document, reporting the path of any offending field.
pub fn parse_config(text: &str) -> Result<ConfigDoc> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de)
        .map_err(|e| Error::InvalidConfig(format!("{}: {}", e.path(), e.inner())))
}

/// Loads a document from disk (or starts from `{}`) and applies dotted-path
/// overrides of the form `section.field=json-value`.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ConfigDoc> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::io(p.display().to_string(), e))?,
        None => "{}".to_string(),
    };
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for spec in overrides {
        apply_override(&mut value, spec)?;
    }
    let doc: ConfigDoc = serde_path_to_error::deserialize(value)
        .map_err(|e| Error::InvalidConfig(format!("{}: {}", e.path(), e.inner())))?;
    Ok(doc)
}

fn apply_override(value: &mut serde_json::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override '{spec}' is not of the form path=value")))?;
    // accept bare strings as a convenience: `kind=lid_driven`
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = value;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(Error::InvalidConfig(format!("override '{spec}' has an empty path segment")));
        }
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override path '{path}' crosses a non-object")))?;
        if i + 1 == segments.len() {
            obj.insert(seg.to_string(), parsed);
            return Ok(());
        }
        cursor = obj.entry(seg.to_string()).or_insert_with(|| serde_json::json!({}));
    }
    unreachable!("loop inserts on the last segment")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_standard_run() {
        let doc = parse_config("{}").unwrap();
        assert_eq!(doc.scenario.n, 32);
        assert_eq!(doc.model.kind, ModelKind::Bingham);
        assert!((doc.model.bi - 14.142135623730951).abs() < 1e-12);
        assert_eq!(doc.solver.grad_tol, 1e-6);
        assert_eq!(doc.solver.stokes_tol, 1e-12);
        assert_eq!(doc.solver.l0, 0.5);
        assert_eq!(doc.solver.eta, 1.1);
        assert_eq!(doc.solver.rho, 2.0);
        assert_eq!(doc.solver.s, 2.0);
        let sc = doc.build_scenario().unwrap();
        assert!(matches!(sc.body_force, BodyForce::Rotational { magnitude, .. } if magnitude == 300.0));
    }

    #[test]
    fn round_trip_preserves_the_document() {
        let doc = parse_config(
            r#"{
                "scenario": {"kind": "lid_driven", "n": 16},
                "model": {"kind": "herschel_bulkley", "bi": 5.0, "r": 1.5},
                "solver": {"algorithm": "alg2", "grad_tol": 1e-4, "stokes_tol": 1e-9, "rho": 3.0}
            }"#,
        )
        .unwrap();
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let again = parse_config(&text).unwrap();
        assert_eq!(doc, again);
    }

    #[test]
    fn invalid_algorithm_error_names_the_field() {
        let err = parse_config(r#"{"solver": {"algorithm": "newton"}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("solver.algorithm"), "message was: {msg}");
    }

    #[test]
    fn unknown_fields_are_rejected_with_path() {
        let err = parse_config(r#"{"solver": {"grad_tol_typo": 1.0}}"#).unwrap_err();
        assert!(err.to_string().contains("grad_tol_typo"));
    }

    #[test]
    fn overrides_navigate_and_parse() {
        let doc = load_config(
            None,
            &[
                "solver.grad_tol=1e-4".into(),
                "solver.stokes_tol=1e-10".into(),
                "scenario.kind=lid_driven".into(),
                "model.bi=20".into(),
            ],
        )
        .unwrap();
        assert_eq!(doc.solver.grad_tol, 1e-4);
        assert_eq!(doc.scenario.kind, ScenarioKind::LidDriven);
        assert_eq!(doc.model.bi, 20.0);
        assert!(load_config(None, &["solver=3".into(), "solver.x=1".into()]).is_err());
    }

    #[test]
    fn compare_grid_default_matches_standard_matrix() {
        let doc = ConfigDoc::default();
        assert_eq!(doc.compare.algorithms.len(), 4);
        assert_eq!(doc.compare.bi.len() * doc.compare.n.len() * doc.compare.algorithms.len(), 16);
    }
}
