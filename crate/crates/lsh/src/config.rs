//! Experiment configuration: JSON in, validated systems and forces out.

use std::collections::BTreeMap;
use std::path::Path;

use lsh_core::force::{affine_class_params, bounded_drift_class_params, ForceModel};
use lsh_core::numlin::operator_norm;
use lsh_core::robust::UncertaintyClass;
use lsh_core::sim::Scheme;
use lsh_core::{LshSystem, Matrix, SymMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// A number stands for a 1×1 matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_matrix(&self, what: &str) -> CliResult<Matrix> {
        match self {
            Self::Scalar(v) => Ok(Matrix::scalar(*v)),
            Self::Rows(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
                    return Err(CliError::Config(format!("{what} must be a non-empty rectangular array")));
                }
                Ok(Matrix::from_rows(rows))
            }
        }
    }

    pub fn to_sym(&self, what: &str) -> CliResult<SymMatrix> {
        SymMatrix::new(self.to_matrix(what)?)
            .map_err(|e| CliError::Config(format!("{what}: {e}")))
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Self::Rows(m.to_rows())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "K")]
    pub stiffness: MatrixSpec,
    #[serde(rename = "M")]
    pub mass: MatrixSpec,
    #[serde(rename = "F")]
    pub damping: MatrixSpec,
    #[serde(rename = "N")]
    pub coupling: MatrixSpec,
}

impl SystemSpec {
    pub fn build(&self, name: &str) -> CliResult<LshSystem> {
        let named = |what: &str| format!("system '{name}' {what}");
        LshSystem::new(
            self.stiffness.to_sym(&named("K"))?,
            self.mass.to_sym(&named("M"))?,
            self.damping.to_sym(&named("F"))?,
            self.coupling.to_matrix(&named("N"))?,
        )
        .map_err(|e| CliError::Config(format!("system '{name}': {e}")))
    }

    pub fn from_system(sys: &LshSystem) -> Self {
        Self {
            stiffness: MatrixSpec::from_matrix(sys.stiffness()),
            mass: MatrixSpec::from_matrix(sys.mass()),
            damping: MatrixSpec::from_matrix(sys.damping()),
            coupling: MatrixSpec::from_matrix(sys.coupling()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceSpec {
    #[default]
    StandardWiener,
    /// `α = offset + gain·x`, `β` constant; `delta` feeds the class bound.
    Affine {
        offset: Vec<f64>,
        gain: MatrixSpec,
        beta: MatrixSpec,
        #[serde(default = "default_class_delta")]
        delta: f64,
    },
    /// `|α| ≤ amplitude` along `direction·x`, `β` constant.
    BoundedDrift {
        amplitude: f64,
        direction: MatrixSpec,
        beta: MatrixSpec,
        #[serde(default = "default_class_delta")]
        delta: f64,
    },
}

fn default_class_delta() -> f64 {
    0.05
}

impl ForceSpec {
    pub fn build(&self, channels: usize) -> CliResult<ForceModel> {
        let model = match self {
            Self::StandardWiener => ForceModel::standard_wiener(channels),
            Self::Affine { offset, gain, beta, .. } => {
                ForceModel::affine(offset.clone(), gain.to_matrix("force gain")?, beta.to_matrix("force beta")?)?
            }
            Self::BoundedDrift { amplitude, direction, beta, .. } => ForceModel::bounded_drift(
                *amplitude,
                direction.to_matrix("force direction")?,
                beta.to_matrix("force beta")?,
            )?,
        };
        if model.channels() != channels {
            return Err(CliError::Config(format!(
                "force has {} channels but the system has {channels}",
                model.channels()
            )));
        }
        Ok(model)
    }

    /// The uncertainty class this force is certified to lie in at `eps`.
    pub fn class_at(&self, sys: &LshSystem, eps: f64) -> lsh_core::Result<UncertaintyClass> {
        match self {
            Self::StandardWiener => {
                let weight = &(sys.coupling() * sys.mass_inverse().as_matrix()) * &sys.coupling().transpose();
                UncertaintyClass::new(weight.trace(), SymMatrix::zeros(sys.state_dim()))
            }
            Self::Affine { offset, gain, beta, delta } => {
                let gain = gain.to_matrix("force gain").map_err(to_core)?;
                let beta = beta.to_matrix("force beta").map_err(to_core)?;
                affine_class_params(sys, eps, offset, &gain, &beta, *delta)
            }
            Self::BoundedDrift { amplitude, beta, delta, .. } => {
                let beta = beta.to_matrix("force beta").map_err(to_core)?;
                let sigma_max = operator_norm(&(&beta * &beta.transpose()))?;
                bounded_drift_class_params(sys, eps, *amplitude, *delta, sigma_max)
            }
        }
    }
}

fn to_core(e: CliError) -> lsh_core::Error {
    lsh_core::Error::InvalidArgument(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    /// `"zero"` or `"stationary"`.
    Named(String),
    State(Vec<f64>),
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self::Named("zero".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_paths")]
    pub paths: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// `exact_linear` or `euler_maruyama`; chosen from the force when absent.
    #[serde(default)]
    pub scheme: Option<String>,
    #[serde(default)]
    pub x0: InitialSpec,
    /// Grid stride of the reported time series; chosen to give about
    /// a thousand rows when absent.
    #[serde(default)]
    pub stride: Option<usize>,
    /// Times at which the ensemble covariance is reported.
    #[serde(default)]
    pub probes: Vec<f64>,
}

fn default_horizon() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_paths() -> u64 {
    10_000
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            dt: default_dt(),
            paths: default_paths(),
            seed: None,
            scheme: None,
            x0: InitialSpec::default(),
            stride: None,
            probes: vec![],
        }
    }
}

impl SimulationSpec {
    pub fn scheme_for(&self, force: &ForceSpec) -> CliResult<Scheme> {
        match self.scheme.as_deref() {
            None if matches!(force, ForceSpec::StandardWiener) => Ok(Scheme::ExactLinear),
            None => Ok(Scheme::EulerMaruyama),
            Some("exact_linear") => Ok(Scheme::ExactLinear),
            Some("euler_maruyama") => Ok(Scheme::EulerMaruyama),
            Some(other) => Err(CliError::Config(format!(
                "unknown scheme '{other}' (expected exact_linear or euler_maruyama)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsSpec {
    /// Only `"auto"` is accepted.
    Auto(String),
    Value(f64),
}

impl Default for EpsSpec {
    fn default() -> Self {
        Self::Auto("auto".into())
    }
}

impl EpsSpec {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(*v),
            Self::Auto(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RobustSpec {
    #[serde(default)]
    pub eps: EpsSpec,
    /// Explicit class level; derived from the force when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(rename = "Delta", default)]
    pub delta: Option<MatrixSpec>,
    /// `E|x(0)|²`; taken from the initial law when absent.
    #[serde(default)]
    pub second_moment_x0: Option<f64>,
    /// Run the Monte Carlo checks of the bound.
    #[serde(default)]
    pub monte_carlo: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TransferSpec {
    /// Evaluation points as `[re, im]`.
    #[serde(default)]
    pub s: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeSpec {
    pub plant: String,
    pub controller: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default = "default_filter_times")]
    pub times: Vec<f64>,
}

fn default_filter_times() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            times: default_filter_times(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub systems: BTreeMap<String, SystemSpec>,
    #[serde(default)]
    pub system: Option<String>,
    #[serde(default)]
    pub force: ForceSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub robust: RobustSpec,
    #[serde(default)]
    pub transfer: TransferSpec,
    #[serde(default)]
    pub compose: Option<ComposeSpec>,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.systems.is_empty() {
            return Err(CliError::Config("no systems defined".into()));
        }
        for (name, spec) in &self.systems {
            spec.build(name)?;
        }
        if let InitialSpec::Named(n) = &self.simulation.x0 {
            if n != "zero" && n != "stationary" {
                return Err(CliError::Config(format!(
                    "x0 must be a vector, \"zero\" or \"stationary\", got \"{n}\""
                )));
            }
        }
        if let EpsSpec::Auto(s) = &self.robust.eps {
            if s != "auto" {
                return Err(CliError::Config(format!("eps must be a number or \"auto\", got \"{s}\"")));
            }
        }
        let sim = &self.simulation;
        if !(sim.horizon > 0.0 && sim.dt > 0.0) {
            return Err(CliError::Config("simulation T and dt must be positive".into()));
        }
        self.simulation.scheme_for(&self.force)?;
        Ok(())
    }

    /// The system named by `system`, or the only one defined.
    pub fn primary_system(&self) -> CliResult<(String, LshSystem)> {
        let name = match &self.system {
            Some(n) => n.clone(),
            None if self.systems.len() == 1 => self.systems.keys().next().cloned().unwrap_or_default(),
            None => {
                return Err(CliError::Config(
                    "several systems defined; choose one with \"system\"".into(),
                ))
            }
        };
        let sys = self.named_system(&name)?;
        Ok((name, sys))
    }

    pub fn named_system(&self, name: &str) -> CliResult<LshSystem> {
        self.systems
            .get(name)
            .ok_or_else(|| CliError::Config(format!("unknown system '{name}'")))?
            .build(name)
    }

    /// SHA-256 of the canonical form: defaults applied, keys sorted, no
    /// whitespace.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_value(self).and_then(|v| serde_json::to_string(&v)).unwrap_or_default();
        let hash = Sha256::digest(canonical.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn require_seed(&self, seed: Option<u64>) -> CliResult<u64> {
        seed.or(self.simulation.seed)
            .ok_or_else(|| CliError::Config("seed required (pass --seed or set simulation.seed)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"systems": {"unit": {"K": 1, "M": 1, "F": 1, "N": 1}}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.simulation.dt, 1e-3);
        assert_eq!(cfg.simulation.paths, 10_000);
        assert_eq!(cfg.simulation.scheme_for(&cfg.force).unwrap(), Scheme::ExactLinear);
        assert_eq!(cfg.robust.eps.value(), None);
        assert_eq!(cfg.primary_system().unwrap().1.dof(), 1);
    }

    #[test]
    fn indefinite_mass_is_named() {
        let text = r#"{"systems": {"bad": {"K": [[1, 0], [0, 1]], "M": [[1, 0], [0, -1]], "F": [[1,0],[0,1]], "N": [[1, 0]]}}}"#;
        let err = ExperimentConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("M not positive definite"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ExperimentConfig::from_json("{\n \"systems\": [\n").unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn seed_is_required_when_missing() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert!(cfg.require_seed(None).unwrap_err().to_string().contains("seed required"));
        assert_eq!(cfg.require_seed(Some(4)).unwrap(), 4);
    }

    #[test]
    fn digest_ignores_layout_and_key_order() {
        let a = ExperimentConfig::from_json(MINIMAL).unwrap();
        let b = ExperimentConfig::from_json(
            r#"{ "systems" : { "unit" : { "N": 1, "F": 1, "M": 1, "K": 1 } }, "schema_version": 1 }"#,
        )
        .unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = ExperimentConfig::from_json(r#"{"systems": {"unit": {"K": 2, "M": 1, "F": 1, "N": 1}}}"#).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"systems": {}, "sytem": "x"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"systems": {"u": {"K": 1, "M": 1, "F": 1, "N": 1}}, "robust": {"eps": "best"}}"#).is_err());
    }
}
