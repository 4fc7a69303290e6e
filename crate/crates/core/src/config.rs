//! Scenario configuration files (TOML) and their canonical hash.
//!
//! ```toml
//! schema_version = 1
//! kind = "fidelity-trace"
//! name = "fig2"
//!
//! [system]
//! mu = 0.0625
//!
//! [noise]
//! q = 1e5
//! temperature = 0.0
//!
//! [sweep]
//! axis = "temperature"
//! values = [0.0, 1.0, 2.0]
//! ```
//!
//! Everything is in simulation units ω_c = ħ = k_B = 1.

use crate::hilbert::{self, Spin};
use crate::lindblad::{Bath, Damping, NoiseSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    FidelityTrace,
    ErrorSweep,
    Jitter,
    NoiseComparison,
    SplittingSweep,
    GateFidelityMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    #[default]
    Transversal,
    Longitudinal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// g/ω_c.
    pub mu: f64,
    #[serde(default)]
    pub omega_q: f64,
    #[serde(default)]
    pub coupling: Coupling,
    #[serde(default = "two")]
    pub n_qubits: usize,
    /// Fock cutoff; the default rule applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbar: Option<f64>,
    #[serde(default)]
    pub gamma_phi: f64,
    #[serde(default)]
    pub gamma1: f64,
    #[serde(default)]
    pub correlated: bool,
}

impl NoiseConfig {
    pub fn to_spec(&self) -> Result<NoiseSpec> {
        let damping = match (self.q, self.kappa) {
            (Some(q), None) => Damping::Q(q),
            (None, Some(k)) => Damping::Kappa(k),
            (None, None) => Damping::Kappa(0.0),
            _ => return Err(Error::InvalidConfig("give at most one of noise.q and noise.kappa".into())),
        };
        let bath = match (self.temperature, self.nbar) {
            (Some(t), None) => Bath::Temperature(t),
            (None, Some(n)) => Bath::Nbar(n),
            (None, None) => Bath::Temperature(0.0),
            _ => return Err(Error::InvalidConfig("give at most one of noise.temperature and noise.nbar".into())),
        };
        NoiseSpec::new(damping, bath, self.gamma_phi, self.gamma1, self.correlated)
            .map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Spin labels, e.g. "ud" for |↑↓⟩.
    pub spins: String,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { spins: "ud".into() }
    }
}

impl InitialConfig {
    pub fn spins(&self) -> Result<Vec<Spin>> {
        hilbert::parse_spins(&self.spins)
    }
}

/// Parameter a sweep axis sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Temperature,
    Nbar,
    Q,
    /// κ n̄_th/ω_c at the configured bath; sets κ.
    KappaNbar,
    GammaPhi,
    Gamma1,
    OmegaQ,
    Mu,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Temperature => "k_bt_over_wc",
            SweepAxis::Nbar => "nbar",
            SweepAxis::Q => "q",
            SweepAxis::KappaNbar => "kappa_nbar_over_wc",
            SweepAxis::GammaPhi => "gamma_over_wc",
            SweepAxis::Gamma1 => "gamma1_over_wc",
            SweepAxis::OmegaQ => "omega_q_over_wc",
            SweepAxis::Mu => "mu",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_steps")]
    pub steps_per_period: usize,
    #[serde(default = "default_samples")]
    pub samples_per_period: usize,
    /// Trace length as a multiple of t_max.
    #[serde(default = "default_span")]
    pub span: f64,
}

fn default_steps() -> usize {
    160
}
fn default_samples() -> usize {
    40
}
fn default_span() -> f64 {
    1.1
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { steps_per_period: default_steps(), samples_per_period: default_samples(), span: default_span() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterConfig {
    /// (ω_c/2π)Δt.
    pub window: f64,
    #[serde(default = "default_window_samples")]
    pub samples: usize,
}

fn default_window_samples() -> usize {
    21
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// CSV file name, relative to the run's output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub kind: ScenarioKind,
    pub name: String,
    pub system: SystemConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    /// Second axis for gate-fidelity maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep2: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<JitterConfig>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn check_grid(s: &SweepConfig) -> Result<()> {
    if s.values.is_empty() {
        return Err(Error::InvalidConfig(format!("sweep over {} has no values", s.axis.name())));
    }
    if s.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("sweep over {} has non-finite values", s.axis.name())));
    }
    let up = s.values.windows(2).all(|w| w[1] > w[0]);
    let down = s.values.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::InvalidConfig(format!("sweep over {} must be strictly monotone", s.axis.name())));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.name.is_empty() {
            return Err(Error::InvalidConfig("name must not be empty".into()));
        }
        let s = &self.system;
        if !(s.mu >= 0.0 && s.mu.is_finite()) || !(s.omega_q >= 0.0 && s.omega_q.is_finite()) || s.n_qubits == 0 {
            return Err(Error::InvalidConfig("system needs mu >= 0, omega_q >= 0 and n_qubits >= 1".into()));
        }
        if let Some(0) = s.n_max {
            return Err(Error::InvalidConfig("n_max must be >= 1".into()));
        }
        self.noise.to_spec()?;
        let spins = self.initial.spins()?;
        if spins.len() != s.n_qubits {
            return Err(Error::InvalidConfig(format!(
                "initial spins {:?} do not match n_qubits = {}",
                self.initial.spins, s.n_qubits
            )));
        }
        for sw in self.sweep.iter().chain(self.sweep2.iter()) {
            check_grid(sw)?;
        }
        let c = &self.integrator;
        if c.steps_per_period < 80 || c.samples_per_period == 0 || !(c.span >= 1.0) {
            return Err(Error::InvalidConfig("integrator needs steps_per_period >= 80, samples_per_period >= 1, span >= 1".into()));
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{:?} scenario needs {what}", self.kind)))
            }
        };
        match self.kind {
            ScenarioKind::ErrorSweep | ScenarioKind::NoiseComparison | ScenarioKind::SplittingSweep => {
                need(self.sweep.is_some(), "a [sweep] section")?
            }
            ScenarioKind::GateFidelityMap => need(self.sweep.is_some() && self.sweep2.is_some(), "[sweep] and [sweep2]")?,
            ScenarioKind::Jitter => {
                need(self.sweep.is_some() && self.jitter.is_some(), "[sweep] and [jitter]")?;
                let j = self.jitter.as_ref().unwrap();
                need(j.window >= 0.0 && j.window.is_finite() && j.samples >= 1, "a non-negative window")?;
            }
            ScenarioKind::FidelityTrace => {}
        }
        Ok(())
    }

    /// Canonical JSON form: struct fields with object keys sorted.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&sort_keys(v)).expect("json serializes")
    }

    /// SHA-256 of the canonical JSON, lowercase hex.
    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

fn sort_keys(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(String, Value)> = m.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = r#"
schema_version = 1
kind = "fidelity-trace"
name = "fig2"

[system]
mu = 0.0625

[noise]
q = 1e5
temperature = 0.0

[sweep]
axis = "temperature"
values = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ScenarioConfig::from_toml(FIG2).unwrap();
        assert_eq!(cfg.kind, ScenarioKind::FidelityTrace);
        assert_eq!(cfg.system.n_qubits, 2);
        assert_eq!(cfg.integrator.samples_per_period, 40);
        let again = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn hash_ignores_key_order() {
        let reordered = r#"
name = "fig2"
kind = "fidelity-trace"
schema_version = 1

[sweep]
values = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
axis = "temperature"

[noise]
temperature = 0.0
q = 100000.0

[system]
mu = 0.0625
"#;
        let a = ScenarioConfig::from_toml(FIG2).unwrap();
        let b = ScenarioConfig::from_toml(reordered).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.system.mu = 0.125;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn rejects_invalid() {
        let bad = |from: &str, to: &str| ScenarioConfig::from_toml(&FIG2.replace(from, to)).unwrap_err();
        assert!(matches!(bad("schema_version = 1", "schema_version = 9"), Error::InvalidConfig(_)));
        assert!(matches!(bad("[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]", "[0.0, 2.0, 1.0]"), Error::InvalidConfig(_)));
        assert!(matches!(bad("[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]", "[]"), Error::InvalidConfig(_)));
        assert!(matches!(bad("q = 1e5", "q = 1e5\nkappa = 1e-5"), Error::InvalidConfig(_)));
        assert!(matches!(bad("q = 1e5", "q = -3.0"), Error::InvalidConfig(_)));
        assert!(matches!(bad("mu = 0.0625", "mu = 0.0625\nbogus = 1"), Error::InvalidConfig(_)));
        assert!(matches!(bad("kind = \"fidelity-trace\"", "kind = \"error-sweep\"\n[jitter]\nwindow=0.1"), Error::InvalidConfig(_)));
        let no_sweep = FIG2.split("[sweep]").next().unwrap().replace("fidelity-trace", "error-sweep");
        assert!(ScenarioConfig::from_toml(&no_sweep).is_err());
    }

    #[test]
    fn noise_defaults() {
        let n = NoiseConfig::default().to_spec().unwrap();
        assert_eq!(n.kappa(1.0), 0.0);
        assert_eq!(n.nbar(1.0).unwrap(), 0.0);
    }
}
