//! JSON experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::RunMetadata;
use crate::multiplier::{select_parameters, ConeScan, MultiplierError, MultiplierWeights, Regime, DEFAULT_DELTA, DEFAULT_K_FACTOR};
use crate::profiles::{DampingProfile, PotentialProfile};
use crate::solver::{InitialData, RunSpec, DEFAULT_COURANT};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dx: f64,
    #[serde(default = "default_courant")]
    pub courant: f64,
    pub horizon: f64,
    pub sample_every: f64,
}

fn default_courant() -> f64 {
    DEFAULT_COURANT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierConfig {
    pub regime: Regime,
    #[serde(default = "one")]
    pub mu_scale: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_k_factor")]
    pub k_factor: f64,
}

fn one() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_k_factor() -> f64 {
    DEFAULT_K_FACTOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    #[serde(default = "scan_dt")]
    pub dt: f64,
    #[serde(default = "scan_dx")]
    pub dx: f64,
    #[serde(default = "scan_horizon")]
    pub horizon: f64,
    /// Overrides the default `C_cert` of the regime.
    #[serde(default)]
    pub c_cert: Option<f64>,
}

fn scan_dt() -> f64 {
    0.5
}
fn scan_dx() -> f64 {
    0.05
}
fn scan_horizon() -> f64 {
    500.0
}

impl Default for CertificateConfig {
    fn default() -> Self {
        CertificateConfig { dt: scan_dt(), dx: scan_dx(), horizon: scan_horizon(), c_cert: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub trace: Option<String>,
    #[serde(default)]
    pub report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub label: Option<String>,
    pub damping: DampingProfile,
    pub potential: PotentialProfile,
    pub initial: InitialData,
    pub grid: GridConfig,
    #[serde(default)]
    pub multiplier: Option<MultiplierConfig>,
    #[serde(default)]
    pub certificate: Option<CertificateConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub override_hypotheses: bool,
}

/// Sidecar written next to each trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: ExperimentConfig,
    pub run: RunMetadata,
}

impl ExperimentConfig {
    /// Parses either a bare config or a sidecar produced by a previous run.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let body = match value.get("config") {
            Some(inner) if value.get("run").is_some() => inner.clone(),
            _ => value,
        };
        let cfg: ExperimentConfig = serde_json::from_value(body).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Range checks on every numeric field; reports all violations at once.
    /// Hypotheses on the profiles are checked separately.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        let pos = |v: &mut Vec<String>, name: &str, x: f64| {
            if !(x > 0.0) || !x.is_finite() {
                v.push(format!("{name}: must be positive and finite (got {x})"));
            }
        };
        pos(&mut v, "grid.dx", self.grid.dx);
        pos(&mut v, "grid.horizon", self.grid.horizon);
        pos(&mut v, "grid.sample_every", self.grid.sample_every);
        pos(&mut v, "initial.radius", self.initial.radius);
        if let Some(m) = &self.multiplier {
            pos(&mut v, "multiplier.mu_scale", m.mu_scale);
            pos(&mut v, "multiplier.delta", m.delta);
            if !(m.k_factor > 1.0) {
                v.push(format!("multiplier.k_factor: must exceed 1 (got {})", m.k_factor));
            }
        }
        if let Some(c) = &self.certificate {
            pos(&mut v, "certificate.dt", c.dt);
            pos(&mut v, "certificate.dx", c.dx);
            pos(&mut v, "certificate.horizon", c.horizon);
            if let Some(cc) = c.c_cert {
                pos(&mut v, "certificate.c_cert", cc);
            }
        }
        if !(self.grid.courant > 0.0 && self.grid.courant <= 1.0) {
            v.push(format!("grid.courant: must lie in (0, 1] (got {})", self.grid.courant));
        }
        if !self.damping.alpha.is_finite() {
            v.push(format!("damping.alpha: must be finite (got {})", self.damping.alpha));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn weights(&self) -> Option<Result<MultiplierWeights, MultiplierError>> {
        self.multiplier
            .as_ref()
            .map(|m| select_parameters(m.regime, &self.damping, m.mu_scale, m.delta, m.k_factor))
    }

    pub fn run_spec(&self, weights: Option<MultiplierWeights>, override_hypotheses: bool) -> RunSpec {
        RunSpec {
            initial: self.initial.clone(),
            damping: self.damping.clone(),
            potential: self.potential.clone(),
            dx: self.grid.dx,
            courant: self.grid.courant,
            horizon: self.grid.horizon,
            sample_every: self.grid.sample_every,
            weights,
            override_hypotheses: override_hypotheses || self.override_hypotheses,
        }
    }

    pub fn cone_scan(&self) -> (ConeScan, Option<f64>) {
        let c = self.certificate.clone().unwrap_or_default();
        (ConeScan { radius: self.initial.radius, horizon: c.horizon, dt: c.dt, dx: c.dx }, c.c_cert)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}
