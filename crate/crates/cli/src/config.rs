//! Pipeline configuration files (JSON or TOML).
//!
//! Generative-model keys may appear at the top level or inside a
//! `generative` table. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use brainsynth::genmodel::GenerativeConfig;
use brainsynth::resample::ResampleSpec;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Classify, CliError, CliResult};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub generative: GenerativeConfig,
    pub resample: ResampleSpec,
    pub paths: PathsConfig,
    pub seed: u64,
    pub threads: Option<usize>,
    pub folds: usize,
    pub train_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            generative: GenerativeConfig::default(),
            resample: ResampleSpec::default(),
            paths: PathsConfig::default(),
            seed: 0,
            threads: None,
            folds: DEFAULT_FOLDS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }
}

/// Keys accepted in the generative section.
fn generative_keys() -> Vec<String> {
    let mut keys: Vec<String> = match serde_json::to_value(GenerativeConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    };
    keys.extend(["r_HR", "b_res", "a_alpha", "b_alpha"].map(String::from));
    keys
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).usage_err(format!("cannot read config {}", path.display()))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        Self::parse(&text, is_toml).map_err(|e| CliError {
            kind: e.kind,
            source: e.source.context(format!("config {}", path.display())),
        })
    }

    pub fn parse(text: &str, is_toml: bool) -> CliResult<Self> {
        let value: Value = if is_toml {
            let t: toml::Table = toml::from_str(text).usage_err("invalid TOML")?;
            serde_json::to_value(t).usage_err("invalid TOML")?
        } else {
            serde_json::from_str(text).usage_err("invalid JSON")?
        };
        let Value::Object(mut top) = value else {
            return Err(CliError::usage("config must be a table/object"));
        };
        let mut section = match top.remove("generative") {
            None => Map::new(),
            Some(Value::Object(m)) => m,
            Some(_) => return Err(CliError::usage("`generative` must be a table/object")),
        };
        for key in generative_keys() {
            if let Some(v) = top.remove(&key) {
                if section.contains_key(&key) {
                    return Err(CliError::usage(format!(
                        "key `{key}` given both at top level and in `generative`"
                    )));
                }
                section.insert(key, v);
            }
        }
        top.insert("generative".into(), Value::Object(section));
        let cfg: PipelineConfig = serde_json::from_value(Value::Object(top)).usage_err("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.generative.validate().usage_err("invalid generative parameters")?;
        self.resample.validate().usage_err("invalid resample section")?;
        if self.folds < 1 {
            return Err(CliError::usage("`folds` must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::usage(format!(
                "`train_fraction` must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.threads == Some(0) {
            return Err(CliError::usage("`threads` must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of every parameter that affects
    /// outputs. The thread count is excluded.
    pub fn hash(&self) -> String {
        let mut effective = self.clone();
        effective.threads = None;
        let json = serde_json::to_vec(&effective).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(PipelineConfig::parse("{}", false).unwrap(), PipelineConfig::default());
        assert_eq!(PipelineConfig::parse("", true).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn top_level_and_section_keys() {
        let a = PipelineConfig::parse(r#"{"b_B": 0.6, "seed": 3}"#, false).unwrap();
        let b = PipelineConfig::parse("seed = 3\n[generative]\nb_B = 0.6\n", true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.generative.b_bias, 0.6);
        assert!(PipelineConfig::parse(r#"{"b_B": 0.6, "generative": {"b_B": 0.5}}"#, false).is_err());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = PipelineConfig::parse(r#"{"b_rotation": 3}"#, false).unwrap_err();
        assert!(format!("{e}").contains("b_rotation"), "{e}");
        let e = PipelineConfig::parse("[generative]\nfoo = 1\n", true).unwrap_err();
        assert!(format!("{e}").contains("foo"), "{e}");
    }

    #[test]
    fn disabled_keys_accept_none_only() {
        assert!(PipelineConfig::parse(r#"{"r_HR": "None", "b_res": null}"#, false).is_ok());
        assert!(PipelineConfig::parse(r#"{"r_HR": 1.0}"#, false).is_err());
    }

    #[test]
    fn hash_tracks_effective_parameters() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.threads = Some(4);
        assert_eq!(a.hash(), b.hash());
        b.generative.b_nonlin = 3.0;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(PipelineConfig::parse(r#"{"train_fraction": 1.0}"#, false).is_err());
        assert!(PipelineConfig::parse(r#"{"folds": 0}"#, false).is_err());
        assert!(PipelineConfig::parse(r#"{"a_rot": 5, "b_rot": 1}"#, false).is_err());
        assert!(PipelineConfig::parse(r#"{"resample": {"target_spacing": [0.7, 0, 0.7]}}"#, false).is_err());
    }
}
