//! Experiment configuration: a TOML document, `--set key=value` overrides
//! and the `MMLAB_SEED` environment variable.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::weights::MolecularSpec;

pub const SEED_ENV: &str = "MMLAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RicciBound,
    KatoNorm,
    GirsanovCheck,
    Completeness,
    FeynmanKac,
    Lipschitz,
    Bismut,
    Harnack,
    FsRatio,
    Khasminskii,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::RicciBound,
        ExperimentKind::KatoNorm,
        ExperimentKind::GirsanovCheck,
        ExperimentKind::Completeness,
        ExperimentKind::FeynmanKac,
        ExperimentKind::Lipschitz,
        ExperimentKind::Bismut,
        ExperimentKind::Harnack,
        ExperimentKind::FsRatio,
        ExperimentKind::Khasminskii,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::RicciBound => "ricci-bound",
            ExperimentKind::KatoNorm => "kato-norm",
            ExperimentKind::GirsanovCheck => "girsanov-check",
            ExperimentKind::Completeness => "completeness",
            ExperimentKind::FeynmanKac => "feynman-kac",
            ExperimentKind::Lipschitz => "lipschitz",
            ExperimentKind::Bismut => "bismut",
            ExperimentKind::Harnack => "harnack",
            ExperimentKind::FsRatio => "fs-ratio",
            ExperimentKind::Khasminskii => "khasminskii",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentKind::RicciBound => "fit A1 + A2/|x-Sigma| over |Ric| at probes and count violations",
            ExperimentKind::KatoNorm => "Kato norm of |x-Sigma|^-1 over a decreasing horizon sweep",
            ExperimentKind::GirsanovCheck => "mean of the Girsanov weight over Brownian paths",
            ExperimentKind::Completeness => "survival fraction of the drift diffusion",
            ExperimentKind::FeynmanKac => "both forms of the ground-state Feynman-Kac identity",
            ExperimentKind::Lipschitz => "Lipschitz smoothing of a halfspace indicator",
            ExperimentKind::Bismut => "Bismut gradient against finite differences and exact values",
            ExperimentKind::Harnack => "sup/inf of the ground state over balls of radius 1/2",
            ExperimentKind::FsRatio => "normalised ground-state derivatives towards Sigma",
            ExperimentKind::Khasminskii => "exponential moment of int |x-Sigma|^-1 against 1/(1-alpha)",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment '{s}' (see `mmlab list-experiments`)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldName {
    Hydrogenic,
    Ou,
    Molecular,
    Zero,
}

/// Field name and numeric parameters: `z` (hydrogenic), `kappa` and `dim`
/// (ou), `dim` (zero), and `quadrature_order` for mollified runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: FieldName,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl FieldSpec {
    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }
}

/// A molecular spec given inline or as a path to a separate TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MolecularSource {
    File(PathBuf),
    Inline(MolecularSpec),
}

fn default_dt() -> f64 {
    crate::paths::DEFAULT_DT
}

fn default_escape_radius() -> f64 {
    crate::paths::DEFAULT_ESCAPE_RADIUS
}

fn default_epsilon_sweep() -> Vec<f64> {
    vec![1.0, 0.1, 0.01]
}

fn default_output_path() -> PathBuf {
    PathBuf::from("mmlab-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub t: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<Vec<f64>>,
    #[serde(default = "default_epsilon_sweep")]
    pub epsilon_sweep: Vec<f64>,
    #[serde(default = "default_escape_radius")]
    pub escape_radius: f64,
    #[serde(default = "default_output_path")]
    pub output_path: PathBuf,
    /// Starting point; each experiment has its own default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    /// Horizon sweep for kato-norm and lipschitz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<f64>>,
    /// Worker-pool size; defaults to the number of processors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub field: FieldSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub molecular_spec: Option<MolecularSource>,
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path`, applies `overrides` (`key=value`, dotted keys reach into
    /// tables) and then `MMLAB_SEED`; a molecular spec given as a file is
    /// resolved relative to the config file and inlined.
    pub fn load(path: &FsPath, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        if let Ok(seed) = std::env::var(SEED_ENV) {
            let seed: i64 = seed.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV} must be a non-negative integer")))?;
            doc.insert("seed".into(), toml::Value::Integer(seed));
        }
        let mut cfg: ExperimentConfig = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if let Some(MolecularSource::File(rel)) = &cfg.molecular_spec {
            let full = path.parent().unwrap_or(FsPath::new(".")).join(rel);
            let spec_text = std::fs::read_to_string(&full).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
            let spec = MolecularSpec::from_toml(&spec_text).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
            cfg.molecular_spec = Some(MolecularSource::Inline(spec));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn molecular(&self) -> Option<&MolecularSpec> {
        match &self.molecular_spec {
            Some(MolecularSource::Inline(spec)) => Some(spec),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        for (name, v) in [("t", self.t), ("dt", self.dt), ("escape_radius", self.escape_radius)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.dt > self.t {
            return bad(format!("dt = {} exceeds t = {}", self.dt, self.t));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if let Some(e) = self.epsilon_sweep.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return bad(format!("epsilon_sweep entries must be positive, got {e}"));
        }
        if let Some(h) = self.horizons.iter().flatten().find(|h| !(h.is_finite() && **h > 0.0)) {
            return bad(format!("horizons must be positive, got {h}"));
        }
        if self.field.name == FieldName::Molecular && self.molecular_spec.is_none() {
            return bad("field 'molecular' needs a molecular_spec".into());
        }
        if let Some((k, _)) = self.field.params.iter().find(|(k, _)| !["z", "kappa", "dim", "quadrature_order"].contains(&k.as_str())) {
            return bad(format!("unknown field parameter '{k}'"));
        }
        Ok(())
    }
}

/// Applies one `key=value` override. The value is parsed as a TOML value and
/// falls back to a plain string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{assignment}' is not of the form key=value")))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::Config(format!("empty key in '{assignment}'")))?;
    let mut table = doc;
    for p in parts {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("'{p}' in '{key}' is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
experiment = "girsanov-check"
t = 1.0
n_paths = 100
seed = 42

[field]
name = "hydrogenic"
params = { z = 1.0 }
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.escape_radius, 1e3);
        assert_eq!(cfg.epsilon_sweep, vec![1.0, 0.1, 0.01]);
        assert_eq!(cfg.field.param("z", 0.0), 1.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let mut doc: toml::Table = BASE.parse().unwrap();
        apply_override(&mut doc, "n_paths=7").unwrap();
        apply_override(&mut doc, "field.params.z = 2.5").unwrap();
        apply_override(&mut doc, "experiment=kato-norm").unwrap();
        apply_override(&mut doc, "horizons=[0.1, 0.05]").unwrap();
        let cfg: ExperimentConfig = toml::Value::Table(doc).try_into().unwrap();
        assert_eq!(cfg.n_paths, 7);
        assert_eq!(cfg.field.param("z", 0.0), 2.5);
        assert_eq!(cfg.experiment, ExperimentKind::KatoNorm);
        assert_eq!(cfg.horizons, Some(vec![0.1, 0.05]));
        assert!(apply_override(&mut toml::Table::new(), "novalue").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = ExperimentConfig::from_toml(BASE).unwrap();
        cfg.n_paths = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::from_toml(BASE).unwrap();
        cfg.field.name = FieldName::Molecular;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml(&BASE.replace("girsanov-check", "nope")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{BASE}\nbogus = 1")).is_err());
    }

    #[test]
    fn experiment_names_parse() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
    }
}
