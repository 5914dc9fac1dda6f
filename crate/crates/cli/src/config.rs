//! Experiment configuration: one JSON document, unknown keys rejected.

use std::path::PathBuf;

use ekman::direct::{ConvergenceConfig, GridConfig};
use ekman::envelope::EnvelopeConfig;
use ekman::forcing::WindConfig;
use ekman::TorusGeometry;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Basis,
    Resonance,
    ForcingCheck,
    Layers,
    Sources,
    SolveEnvelope,
    MeanLimit,
    SolveDirect,
    Compare,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Basis => "basis",
            Kind::Resonance => "resonance",
            Kind::ForcingCheck => "forcing-check",
            Kind::Layers => "layers",
            Kind::Sources => "sources",
            Kind::SolveEnvelope => "solve-envelope",
            Kind::MeanLimit => "mean-limit",
            Kind::SolveDirect => "solve-direct",
            Kind::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present it must name the subcommand being run.
    #[serde(default)]
    pub kind: Option<Kind>,
    pub geometry: GeometryBlock,
    #[serde(default)]
    pub wind: Option<WindConfig>,
    #[serde(default)]
    pub solver: Option<EnvelopeConfig>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub initial: InitialBlock,
    #[serde(default)]
    pub basis: BasisBlock,
    #[serde(default)]
    pub resonance: ResonanceBlock,
    #[serde(default)]
    pub forcing: ForcingBlock,
    #[serde(default)]
    pub layers: LayersBlock,
    #[serde(default)]
    pub sources: SourcesBlock,
    #[serde(default)]
    pub mean_limit: MeanLimitBlock,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    pub a1: f64,
    pub a2: f64,
    pub a: f64,
}

/// Random real initial field with standard deviation
/// `amplitude/(1 + max|k_i|)^decay` per mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialBlock {
    pub amplitude: f64,
    pub decay: f64,
    /// Drop the `k_h = 0` modes.
    pub remove_mean_flow: bool,
}

impl Default for InitialBlock {
    fn default() -> Self {
        InitialBlock { amplitude: 1.0, decay: 2.0, remove_mean_flow: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisBlock {
    #[serde(rename = "N")]
    pub truncation: u32,
}

impl Default for BasisBlock {
    fn default() -> Self {
        BasisBlock { truncation: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonanceBlock {
    #[serde(rename = "N")]
    pub truncation: u32,
    /// Outputs up to this cutoff; defaults to `2N`.
    pub output_cutoff: Option<u32>,
    pub tolerance: f64,
    pub include_nonresonant: bool,
    /// Cutoff of the non-resonance audit; defaults to `N`.
    pub audit_cutoff: Option<u32>,
}

impl Default for ResonanceBlock {
    fn default() -> Self {
        ResonanceBlock { truncation: 3, output_cutoff: None, tolerance: ekman::resonance::DEFAULT_RESONANCE_TOL, include_nonresonant: false, audit_cutoff: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleBlock {
    pub n_max: u32,
    pub decay: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingBlock {
    pub alphas: Vec<f64>,
    /// Required gap between atom frequencies and `±1`.
    pub eta: f64,
    /// `[min, max, count]` of the `λ` grid for `F_α` curves.
    pub lambda_grid: (f64, f64, usize),
    /// Replaces the wind block with the H2 counterexample.
    pub counterexample: Option<CounterexampleBlock>,
    pub x_h: [f64; 2],
    /// `σ_α` is compared with `σ` on `τ ∈ [0, tau_end]`.
    pub tau_end: f64,
    pub tau_samples: usize,
}

impl Default for ForcingBlock {
    fn default() -> Self {
        ForcingBlock {
            alphas: vec![1e-1, 1e-2, 1e-3],
            eta: 0.05,
            lambda_grid: (-2.0, 2.0, 401),
            counterexample: None,
            x_h: [0.2, 0.7],
            tau_end: 10.0,
            tau_samples: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayersBlock {
    pub epsilon: f64,
    pub nu: f64,
    pub beta: f64,
    pub delta: f64,
    pub t: f64,
    pub x_h: [f64; 2],
    pub taus: Vec<f64>,
    pub zetas: Vec<f64>,
    /// `ε = ν` values of the amplitude scaling sweep.
    pub scaling_epsilons: Vec<f64>,
}

impl Default for LayersBlock {
    fn default() -> Self {
        LayersBlock {
            epsilon: 1e-2,
            nu: 1e-2,
            beta: 1.0,
            delta: 1e-3,
            t: 0.0,
            x_h: [0.2, 0.45],
            taus: vec![0.0, 0.5, 1.0, 2.0],
            zetas: (0..=40).map(|i| 0.25 * i as f64).collect(),
            scaling_epsilons: vec![1e-2, 1e-3, 1e-4],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourcesBlock {
    #[serde(rename = "N")]
    pub truncation: u32,
    pub epsilon: f64,
    pub nu: f64,
    pub beta: f64,
    pub delta: f64,
    pub t: f64,
    pub thetas: Vec<f64>,
}

impl Default for SourcesBlock {
    fn default() -> Self {
        SourcesBlock { truncation: 2, epsilon: 1e-2, nu: 1e-2, beta: 1.0, delta: 1e-2, t: 0.0, thetas: vec![1e2, 1e3, 1e4] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanLimitBlock {
    pub realizations: usize,
}

impl Default for MeanLimitBlock {
    fn default() -> Self {
        MeanLimitBlock { realizations: 64 }
    }
}

/// `serde_path_to_error` reports a missing field at its parent; append the
/// field name so the path points at what is missing.
fn field_path(path: String, message: &str) -> String {
    let missing = message.strip_prefix("missing field `").and_then(|r| r.split('`').next());
    match (missing, path.as_str()) {
        (Some(f), ".") | (Some(f), "") => f.to_string(),
        (Some(f), p) => format!("{p}.{f}"),
        (None, _) => path,
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let message = e.inner().to_string();
        let message = message.split(" at line ").next().unwrap_or(&message).to_string();
        CliError::Config { path: field_path(e.path().to_string(), &message), message }
    })?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn geometry(&self) -> Result<TorusGeometry, CliError> {
        let g = self.geometry;
        TorusGeometry::new(g.a1, g.a2, g.a).map_err(|e| CliError::config("geometry", e))
    }

    pub fn check_kind(&self, kind: Kind) -> Result<(), CliError> {
        match self.kind {
            Some(k) if k != kind => Err(CliError::Config { path: "kind".into(), message: format!("config is for `{}`, not `{}`", k.name(), kind.name()) }),
            _ => Ok(()),
        }
    }

    pub fn require<'a, T>(block: &'a Option<T>, name: &str, kind: Kind) -> Result<&'a T, CliError> {
        block.as_ref().ok_or_else(|| CliError::Config { path: name.into(), message: format!("missing block required by `{}`", kind.name()) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_field_path_names_the_field() {
        let err = parse(r#"{"geometry": {"a1": 1, "a2": 1}}"#).unwrap_err();
        match err {
            CliError::Config { path, message } => {
                assert_eq!(path, "geometry.a");
                assert!(message.contains("missing field"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected_with_its_path() {
        let err = parse(r#"{"geometry": {"a1": 1, "a2": 1, "a": 1}, "basis": {"N": 2, "n": 3}}"#).unwrap_err();
        match err {
            CliError::Config { path, message } => {
                assert_eq!(path, "basis.n");
                assert!(message.contains("unknown field"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_fill_optional_blocks() {
        let cfg = parse(r#"{"geometry": {"a1": 1, "a2": 1, "a": 1}}"#).unwrap();
        assert_eq!(cfg.basis.truncation, 4);
        assert_eq!(cfg.seed, 0);
        assert!(cfg.wind.is_none() && cfg.kind.is_none());
    }
}
