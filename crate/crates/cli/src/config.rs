//! Experiment configuration: a TOML document with one level of sections, overridable by
//! `section.key=value` pairs from the command line or the environment.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Prefix of environment overrides: `LEAFWISE__SIMULATION__PATHS=500` sets `simulation.paths`.
pub const ENV_PREFIX: &str = "LEAFWISE__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Drift,
    Entropy,
    Clt,
    Derivative,
    Morse,
    MainFormula,
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    H2,
    H3,
    Quotient,
}

impl Backend {
    pub fn dimension(&self) -> usize {
        match self {
            Backend::H3 => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Drift,
    Entropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulation {
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// Time between recorded states; defaults to a quarter of the estimator time.
    pub record_interval: Option<f64>,
    pub burn_in: f64,
    pub reorthonormalize_every: usize,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            horizon: 50.0,
            dt: 1e-3,
            paths: 2000,
            seed: 1,
            record_interval: None,
            burn_in: 10.0,
            reorthonormalize_every: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Family {
    /// Drift `λX̄` of the simulated diffusion.
    pub lambda: f64,
    /// Step sizes of the finite-difference derivative.
    pub lambdas: Vec<f64>,
    /// Bump defining `φ` (invariant on the quotient).
    pub phi_amplitude: f64,
    pub phi_radius: f64,
    pub phi_center_distance: f64,
}

impl Default for Family {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            lambdas: vec![0.1],
            phi_amplitude: 0.5,
            phi_radius: 1.0,
            phi_center_distance: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Estimator {
    /// Estimation time; defaults to the simulation horizon.
    pub t: Option<f64>,
    pub method: leafwise::estimators::Method,
    pub which: Which,
    /// Pass window in standard errors.
    pub sigmas: f64,
    /// Ergodic samples per path for the main-formula experiment.
    pub samples_per_path: usize,
}

impl Default for Estimator {
    fn default() -> Self {
        Self {
            t: None,
            method: leafwise::estimators::Method::Increment,
            which: Which::Drift,
            sigmas: 3.0,
            samples_per_path: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default)]
    pub simulation: Simulation,
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub estimator: Estimator,
}

fn default_backend() -> Backend {
    Backend::H2
}

impl ExperimentConfig {
    /// Parses `text` after applying `overrides` (`section.key=value`, later entries win).
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(doc)).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let s = &self.simulation;
        if !(s.dt > 0.0 && s.horizon > 0.0) || s.paths == 0 {
            return Err(CliError::Config("simulation.dt, simulation.horizon and simulation.paths must be positive".into()));
        }
        if let Some(t) = self.estimator.t {
            if !(t > 0.0 && t <= s.horizon) {
                return Err(CliError::Config(format!("estimator.t = {t} must lie in (0, simulation.horizon]")));
            }
        }
        Ok(())
    }

    pub fn estimator_t(&self) -> f64 {
        self.estimator.t.unwrap_or(self.simulation.horizon)
    }

    /// Canonical serialization: JSON with lexicographically ordered keys.
    pub fn canonical(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        sort_keys(&v).to_string()
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn sort_keys(v: &serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let mut out = serde_json::Map::new();
            for k in keys {
                out.insert(k.clone(), sort_keys(&m[k]));
            }
            serde_json::Value::Object(out)
        }
        serde_json::Value::Array(a) => serde_json::Value::Array(a.iter().map(sort_keys).collect()),
        other => other.clone(),
    }
}

/// Applies one `key=value` or `section.key=value` override; the value is read as a TOML literal
/// and falls back to a string.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    match parts.as_slice() {
        [k] => {
            doc.insert(k.to_string(), value);
        }
        [section, k] => {
            let entry = doc
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let table = entry
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("`{section}` is not a section")))?;
            table.insert(k.to_string(), value);
        }
        _ => return Err(CliError::Config(format!("override key `{key}` has more than one level"))),
    }
    Ok(())
}

/// Overrides from `LEAFWISE__SECTION__KEY=value` environment variables, sorted by key.
pub fn env_overrides(vars: impl Iterator<Item = (String, String)>) -> Vec<String> {
    let mut out: Vec<String> = vars
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            let key = rest.split("__").map(|p| p.to_ascii_lowercase()).collect::<Vec<_>>().join(".");
            Some(format!("{key}={v}"))
        })
        .collect();
    out.sort();
    out
}
