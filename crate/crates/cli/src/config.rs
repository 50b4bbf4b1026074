use crate::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use torus_elliptic::evolution::CauchyProblemSpec;
use torus_elliptic::operators::OperatorSpec;
use torus_elliptic::TrigPoly;

/// Effective run configuration after file loading and flag overrides.
///
/// Referenced input files are inlined before hashing, so the hash covers
/// their contents rather than their paths. The output directory is not hashed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub operator: Option<OperatorSpec>,
    #[serde(skip_serializing)]
    pub operator_path: Option<PathBuf>,
    pub problem: Option<CauchyProblemSpec>,
    #[serde(skip_serializing)]
    pub problem_path: Option<PathBuf>,
    /// Functions analysed by `norms`.
    pub functions: Vec<TrigPoly>,
    pub bandwidth: usize,
    pub grid: usize,
    pub scan_bound: usize,
    pub alpha: f64,
    /// Hölder indices reported by `norms`.
    pub thetas: Vec<f64>,
    /// Besov smoothness indices reported by `norms`.
    pub besov_s: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Spectral parameter for `multiplier-audit`, as (re, im).
    pub lambda: (f64, f64),
    /// Dyadic blocks j = 1..=J audited for η₂.
    pub blocks: u32,
    pub ladder_shift: f64,
    pub ladder_exponents: Vec<f64>,
    pub eps: Vec<f64>,
    /// Ray direction for threshold ladders, as (re, im).
    pub direction: (f64, f64),
    /// Sector angle for system certificates.
    pub theta: f64,
    pub k_dict: usize,
    pub seed: u64,
    pub mu: f64,
    pub horizon: f64,
    pub steps: usize,
    pub samples: usize,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            operator: None,
            operator_path: None,
            problem: None,
            problem_path: None,
            functions: vec![TrigPoly::mode(1)],
            bandwidth: 32,
            grid: 256,
            scan_bound: 10_000,
            alpha: 0.5,
            thetas: vec![0.5, 1.5, 2.5],
            besov_s: vec![0.3, 0.5, 1.4, 2.5],
            deltas: vec![1e-1, 1e-2, 1e-3],
            lambda: (1.0, 0.0),
            blocks: 8,
            ladder_shift: 0.0,
            ladder_exponents: vec![1.0, 2.0, 3.0, 4.0],
            eps: vec![0.2, 0.1, 0.05],
            direction: (1.0, 0.0),
            theta: 0.75 * std::f64::consts::PI,
            k_dict: 16,
            seed: 0,
            mu: 1.0,
            horizon: 1.0,
            steps: 64,
            samples: 20,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("cannot parse {}: {e}", path.display())))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => read_json(p),
            None => Ok(RunConfig::default()),
        }
    }

    /// Inlines referenced files and checks every numeric knob.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Some(p) = self.operator_path.take() {
            self.operator = Some(read_json(&p)?);
        }
        if let Some(p) = self.problem_path.take() {
            self.problem = Some(read_json(&p)?);
        }
        let bad = |what: &str| Err(CliError::Validation(format!("{what} must be positive")));
        if self.bandwidth == 0 {
            return bad("bandwidth");
        }
        if self.grid < 16 {
            return Err(CliError::Validation("grid must have at least 16 nodes".into()));
        }
        if self.scan_bound < 2 {
            return Err(CliError::Validation("scan_bound must be at least 2".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Validation("alpha must lie in (0,1)".into()));
        }
        if self.k_dict == 0 || self.steps == 0 || self.samples == 0 || self.blocks == 0 {
            return bad("k_dict, steps, samples and blocks");
        }
        if !(self.horizon > 0.0) {
            return bad("horizon");
        }
        if self.deltas.iter().chain(&self.eps).any(|v| !(*v > 0.0)) {
            return bad("every delta and eps");
        }
        Ok(self)
    }

    pub fn require_operator(&self) -> Result<&OperatorSpec, CliError> {
        self.operator
            .as_ref()
            .ok_or_else(|| CliError::Validation("this command needs an operator (config field or --operator)".into()))
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn nonpositive_knobs_are_rejected() {
        let c = RunConfig { bandwidth: 0, ..RunConfig::default() };
        assert!(matches!(c.resolve(), Err(CliError::Validation(_))));
        let c = RunConfig { eps: vec![0.1, -0.2], ..RunConfig::default() };
        assert!(matches!(c.resolve(), Err(CliError::Validation(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"bandwith": 4}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"bandwidth": 4}"#).unwrap();
        assert_eq!(c.bandwidth, 4);
        assert_eq!(c.grid, 256);
    }
}
