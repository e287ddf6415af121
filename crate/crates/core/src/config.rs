//! Experiment configuration: strict, versioned JSON.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "model": {
//!     "drift": [0.0],
//!     "covariance": [1.0],
//!     "jumps": [{ "distribution": "atom", "rate": 1.0, "at": [2.0] }]
//!   },
//!   "functional": { "name": "terminal", "params": { "field": "square" } },
//!   "run": { "steps": 4096, "paths": 512, "seed": 7 },
//!   "verifier": "thm3",
//!   "output_dir": "out"
//! }
//! ```

use crate::functional::catalog::{self, CatalogError, Params};
use crate::functional::{FunctionalHandle, ScalarField};
use crate::ito::{Formula, RunSettings};
use crate::levy::{JumpComponent, JumpLaw, LevyModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;
pub const MIN_STEPS: usize = 1 << 6;
pub const MAX_STEPS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl ConfigError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Syntax { line, .. } | ConfigError::Invalid { line, .. } => Some(*line),
            ConfigError::Io { .. } => None,
        }
    }
}

/// One compound Poisson component; `rate` plus a tagged jump-size law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpSpec {
    Atom { rate: f64, at: Vec<f64> },
    UniformBall { rate: f64, center: Vec<f64>, radius: f64 },
    GaussianTruncated { rate: f64, mean: Vec<f64>, std_dev: f64, radius: f64 },
}

impl JumpSpec {
    fn component(&self) -> Result<JumpComponent, String> {
        let (rate, law) = match self.clone() {
            JumpSpec::Atom { rate, at } => (rate, JumpLaw::Atom { at }),
            JumpSpec::UniformBall { rate, center, radius } => (rate, JumpLaw::UniformBall { center, radius }),
            JumpSpec::GaussianTruncated { rate, mean, std_dev, radius } => {
                (rate, JumpLaw::GaussianTruncated { mean, std_dev, radius })
            }
        };
        JumpComponent::new(rate, law)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub drift: Vec<f64>,
    /// Row-major `d × d`.
    pub covariance: Vec<f64>,
    #[serde(default)]
    pub jumps: Vec<JumpSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    pub name: String,
    #[serde(default)]
    pub params: Params,
}

fn default_horizon() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Number of grid steps `K`.
    pub steps: usize,
    /// Number of paths `M`.
    pub paths: usize,
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Evaluation times; empty means the horizon.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t_eval: Vec<f64>,
    /// `K` values for convergence sweeps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub convergence_steps: Vec<usize>,
    /// Accepted range of the fitted log-log slope in convergence sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_slope: Option<[f64; 2]>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub functional: FunctionalSpec,
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier: Option<Formula>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// Tagged enums are buffered before their fields are checked, so serde
/// reports unknown keys at the end of the enclosing object. Point at the
/// last occurrence of the key at or before that position instead.
fn syntax_error(text: &str, e: &serde_json::Error) -> ConfigError {
    let mut message = e.to_string();
    if let Some(i) = message.rfind(" at line ") {
        message.truncate(i);
    }
    let (mut line, mut column) = (e.line(), e.column());
    if let Some(key) = message.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
        let needle = format!("\"{key}\"");
        if let Some((i, c)) = text
            .lines()
            .take(line)
            .enumerate()
            .filter_map(|(i, l)| l.rfind(&needle).map(|c| (i, c)))
            .last()
        {
            (line, column) = (i + 1, c + 1);
        }
    }
    ConfigError::Syntax { line, column, message }
}

/// Line of the first occurrence of `"key"` in `text`, or 1.
fn line_of(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map_or(1, |i| i + 1)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Self::parse(text, false)
    }

    /// Parses and validates. `M = 1` is accepted only when `allow_single_path`.
    pub fn parse(text: &str, allow_single_path: bool) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| syntax_error(text, &e))?;
        cfg.check(text, allow_single_path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path, allow_single_path: bool) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text, allow_single_path)
    }

    /// Re-runs validation on an already parsed config (after overrides).
    /// Line numbers refer to the pretty-printed form.
    pub fn validate(&self, allow_single_path: bool) -> Result<(), ConfigError> {
        self.check(&self.to_json_pretty(), allow_single_path)
    }

    fn check(&self, text: &str, allow_single_path: bool) -> Result<(), ConfigError> {
        let inv = |key: &str, message: String| ConfigError::Invalid { line: line_of(text, key), message };
        if self.schema_version != SCHEMA_VERSION {
            return Err(inv(
                "schema_version",
                format!("unsupported schema_version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let r = &self.run;
        check_steps(r.steps).map_err(|m| inv("steps", m))?;
        let min_paths = if allow_single_path { 1 } else { 2 };
        if r.paths < min_paths {
            return Err(inv("paths", format!("paths must be at least {min_paths}, got {}", r.paths)));
        }
        if !(r.horizon > 0.0) || !r.horizon.is_finite() {
            return Err(inv("horizon", format!("horizon must be positive and finite, got {}", r.horizon)));
        }
        for &t in &r.t_eval {
            if !(t > 0.0 && t <= r.horizon) {
                return Err(inv("t_eval", format!("evaluation time {t} outside (0, {}]", r.horizon)));
            }
            let pos = t / r.horizon * r.steps as f64;
            if (pos - pos.round()).abs() > 1e-9 * pos.max(1.0) {
                return Err(inv("t_eval", format!("evaluation time {t} is not a grid knot for K = {}", r.steps)));
            }
        }
        for &k in &r.convergence_steps {
            check_steps(k).map_err(|m| inv("convergence_steps", m))?;
        }
        if let Some([lo, hi]) = r.expected_slope {
            if !(lo <= hi) {
                return Err(inv("expected_slope", format!("expected_slope [{lo}, {hi}] is empty")));
            }
        }
        let model = self.model().map_err(|m| inv("model", m))?;
        self.functional_handle(model.dim()).map_err(|e| inv("functional", e.to_string()))?;
        Ok(())
    }

    pub fn model(&self) -> Result<LevyModel, String> {
        let jumps = self
            .model
            .jumps
            .iter()
            .enumerate()
            .map(|(i, j)| j.component().map_err(|e| format!("jump component {i}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        LevyModel::new(self.model.drift.clone(), self.model.covariance.clone(), jumps).map_err(|e| e.to_string())
    }

    pub fn functional_handle(&self, dim: usize) -> Result<FunctionalHandle, CatalogError> {
        catalog::functional(&self.functional.name, &self.functional.params, dim)
    }

    /// The scalar field behind a terminal functional, or a field named
    /// directly in the functional block.
    pub fn field(&self, dim: usize) -> Result<ScalarField, CatalogError> {
        let p = &self.functional.params;
        match self.functional.name.as_str() {
            "terminal" => catalog::field(p.field.as_deref().unwrap_or("identity"), p, dim),
            "terminal_identity" => catalog::field("identity", p, dim),
            "quadratic" => catalog::field("norm_sq", p, dim),
            other => catalog::field(other, p, dim),
        }
    }

    /// Evaluation times (the horizon when none are given).
    pub fn eval_times(&self) -> Vec<f64> {
        if self.run.t_eval.is_empty() {
            vec![self.run.horizon]
        } else {
            self.run.t_eval.clone()
        }
    }

    pub fn settings(&self, steps: usize, t: f64, workers: usize) -> RunSettings {
        let mut s = RunSettings::new(steps, self.run.paths, self.run.seed).with_workers(workers);
        s.horizon = self.run.horizon;
        s.t_eval = Some(t);
        s
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the compact canonical serialisation, lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        hex(&Sha256::digest(canonical.as_bytes()))
    }
}

fn check_steps(k: usize) -> Result<(), String> {
    if !k.is_power_of_two() || !(MIN_STEPS..=MAX_STEPS).contains(&k) {
        return Err(format!("steps must be a power of two in [2^6, 2^20], got {k}"));
    }
    Ok(())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
