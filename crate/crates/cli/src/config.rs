use std::fs;
use std::path::{Path, PathBuf};

use gib_core::gibnn::{GibConfig, Variant};
use gib_core::robustbench::{AttackSpec, ModelSpec, TargetCounts};
use gib_core::train::OptimConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("--set {0}: expected KEY=VALUE")]
    BadOverride(String),
    #[error("--set {key}: {message}")]
    Override { key: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Models and attacks for the `attack` command.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackPlan {
    /// Models to compare; empty means the run's own model.
    pub models: Vec<ModelSpec>,
    pub specs: Vec<AttackSpec>,
    pub targets: TargetCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub model: GibConfig,
    pub epochs: usize,
    pub optim: OptimConfig,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub attack: AttackPlan,
}

/// Overlays the keys of `over` onto `base`, recursing into objects.
fn overlay(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Model settings: the preset for the named variant with the given fields
/// on top.
fn model_value(raw: Option<Value>) -> Result<Value, ConfigError> {
    let raw = raw.unwrap_or_else(|| Value::Object(Map::new()));
    let variant = match raw.get("variant") {
        Some(v) => {
            serde_json::from_value::<Variant>(v.clone()).map_err(|source| ConfigError::Parse {
                context: "model.variant".into(),
                source,
            })?
        }
        None => Variant::Cat,
    };
    let mut base = serde_json::to_value(GibConfig::preset(variant)).expect("config serializes");
    overlay(&mut base, raw);
    Ok(base)
}

fn defaults() -> Value {
    serde_json::json!({
        "epochs": 2000,
        "optim": OptimConfig::default(),
        "out": "runs",
        "seeds": [0, 1, 2, 3, 4],
        "workers": 1,
        "attack": AttackPlan::default(),
    })
}

/// Sets a dotted path such as `model.beta1` or `seeds.0`. The value is read
/// as JSON when it parses, else as a string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(assignment.into()))?;
    if key.is_empty() {
        return Err(ConfigError::BadOverride(assignment.into()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert((*part).into(), value);
                    return Ok(());
                }
                map.entry(*part)
                    .or_insert_with(|| Value::Object(Map::new()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| ConfigError::Override {
                    key: key.into(),
                    message: format!("`{part}` is not an array index"),
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| ConfigError::Override {
                    key: key.into(),
                    message: format!("index {idx} out of range for length {len}"),
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(ConfigError::Override {
                    key: key.into(),
                    message: format!("`{part}` is inside a non-container value"),
                })
            }
        };
    }
    Ok(())
}

impl RunConfig {
    /// Builds a config from a JSON document, filling unset fields with
    /// defaults and unset model fields from the variant's preset.
    pub fn from_value(doc: Value) -> Result<Self, ConfigError> {
        let Value::Object(mut map) = doc else {
            return Err(invalid("<root>", "config must be a JSON object"));
        };
        let model = model_value(map.remove("model"))?;
        let mut merged = defaults();
        overlay(&mut merged, Value::Object(map));
        let attack_models = merged
            .get_mut("attack")
            .and_then(|a| a.get_mut("models"))
            .and_then(Value::as_array_mut);
        if let Some(models) = attack_models {
            for m in models.iter_mut() {
                let cfg = m.as_object_mut().and_then(|o| o.remove("config"));
                let cfg = model_value(cfg)?;
                if let Some(o) = m.as_object_mut() {
                    o.insert("config".into(), cfg);
                }
            }
        }
        merged
            .as_object_mut()
            .expect("defaults are an object")
            .insert("model".into(), model);
        serde_json::from_value(merged).map_err(|source| ConfigError::Parse {
            context: "config".into(),
            source,
        })
    }

    /// Reads `path`, applies `--set` overrides in order, and builds the config.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut doc: Value = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            context: path.display().to_string(),
            source,
        })?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_value(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked before any compute.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.dataset.is_dir() {
            return Err(invalid(
                "dataset",
                format!("{} is not a directory", self.dataset.display()),
            ));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if self.epochs < 4 {
            return Err(invalid(
                "epochs",
                format!("need at least 4, got {}", self.epochs),
            ));
        }
        if self.workers == 0 {
            return Err(invalid("workers", "need at least 1"));
        }
        if !(self.optim.lr.is_finite() && self.optim.lr > 0.0) {
            return Err(invalid(
                "optim.lr",
                format!("must be positive, got {}", self.optim.lr),
            ));
        }
        if self.optim.weight_decay.is_nan() || self.optim.weight_decay < 0.0 {
            return Err(invalid(
                "optim.weight_decay",
                format!("must be non-negative, got {}", self.optim.weight_decay),
            ));
        }
        self.model
            .validate()
            .map_err(|e| invalid("model", e.to_string()))?;
        for (i, m) in self.attack.models.iter().enumerate() {
            m.config
                .validate()
                .map_err(|e| invalid(format!("attack.models.{i}.config"), e.to_string()))?;
        }
        for (i, s) in self.attack.specs.iter().enumerate() {
            s.validate()
                .map_err(|e| invalid(format!("attack.specs.{i}"), e.to_string()))?;
        }
        Ok(())
    }
}
