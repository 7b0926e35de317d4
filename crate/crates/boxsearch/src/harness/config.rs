//! Versioned JSON experiment configs. Unknown keys are rejected so typos
//! fail loudly; `--override key=value` patches dotted paths before parsing.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{config, Result};
use crate::matroid::Matroid;
use crate::model::{ConstraintFamily, GeneratorSpec, InstanceFile, ScenarioSequence};
use crate::oracle::BenchmarkPolicy;
use crate::rounding::StoppingRule;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    FullInfo,
    Bandit,
    Na,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::FullInfo => "full-info",
            Algorithm::Bandit => "bandit",
            Algorithm::Na => "na",
        }
    }
}

/// Where scenarios come from: exactly one of `generator` or `file`.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        match (&self.generator, &self.file) {
            (Some(g), None) => g.validate().map_err(|e| config(e.to_string())),
            (None, Some(_)) => Ok(()),
            _ => Err(config("instance needs exactly one of `generator` or `file`")),
        }
    }

    /// Materializes the stream, resized to `t` when a sweep asks for it.
    pub fn realize(&self, t: Option<usize>, seed: u64) -> Result<(ScenarioSequence, Option<Matroid>)> {
        match (&self.generator, &self.file) {
            (Some(g), None) => {
                let spec = match t {
                    Some(t) => g.with_t(t),
                    None => g.clone(),
                };
                Ok((ScenarioSequence::generate(&spec, seed)?, None))
            }
            (None, Some(path)) => {
                let (seq, matroid) = InstanceFile::load(Path::new(path))?.into_sequence()?;
                if let Some(t) = t {
                    if t != seq.len() {
                        return Err(config(format!(
                            "file instances have a fixed horizon {}; cannot sweep to {t}",
                            seq.len()
                        )));
                    }
                }
                Ok((seq, matroid))
            }
            _ => Err(config("instance needs exactly one of `generator` or `file`")),
        }
    }
}

/// Tunables; anything left out takes the algorithm's own default.
#[derive(Clone, Debug, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct AlgoParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub alternate_interval_formula: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping: Option<StoppingRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub na_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub na_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub collect_iterates: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub version: u32,
    pub algorithm: Algorithm,
    pub family: ConstraintFamily,
    pub instance: InstanceSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Horizon sweep; each entry reruns the generator at that length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_t: Option<Vec<usize>>,
    #[serde(default)]
    pub params: AlgoParams,
    #[serde(default)]
    pub benchmark: BenchmarkPolicy,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_replicas() -> usize {
    1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.instance.validate()?;
        if let Some(g) = &self.instance.generator {
            self.family.validate(g.n()).map_err(|e| config(e.to_string()))?;
        }
        if self.seeds.is_empty() {
            return Err(config("config needs at least one seed"));
        }
        if self.replicas == 0 {
            return Err(config("config needs replicas >= 1"));
        }
        if let Some(ts) = &self.sweep_t {
            if ts.is_empty() {
                return Err(config("sweep-t must list at least one horizon"));
            }
            if ts.iter().any(|&t| t == 0) {
                return Err(config("sweep-t horizons must be >= 1"));
            }
            if self.instance.file.is_some() {
                return Err(config("sweep-t requires a generator instance"));
            }
        }
        if let Some(p) = self.params.explore_probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(config("explore-probability must be in [0, 1]"));
            }
        }
        for (name, v) in [("na-beta", self.params.na_beta), ("na-alpha", self.params.na_alpha)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(config(format!("{name} must be finite and > 0")));
                }
            }
        }
        Ok(())
    }

    /// Horizons to run: the sweep when present, otherwise the instance's own.
    pub fn horizons(&self) -> Vec<Option<usize>> {
        match &self.sweep_t {
            Some(ts) => ts.iter().map(|&t| Some(t)).collect(),
            None => vec![None],
        }
    }

    /// FNV-1a over the canonical serialization; stable across reloads of
    /// the same effective config.
    pub fn content_hash(&self) -> u64 {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut hash = 0xCBF2_9CE4_8422_2325u64;
        for b in text.bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        }
        hash
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig = if overrides.is_empty() {
            serde_json::from_str(&text)
                .map_err(|e| config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?
        } else {
            let mut value: Value = serde_json::from_str(&text)
                .map_err(|e| config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
            for ov in overrides {
                apply_override(&mut value, ov)?;
            }
            let patched = serde_json::to_string_pretty(&value).expect("value serializes");
            serde_json::from_str(&patched).map_err(|e| {
                config(format!(
                    "{} (with overrides) line {} column {}: {e}",
                    path.display(),
                    e.line(),
                    e.column()
                ))
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Applies one `dotted.path=json-or-string` patch to a config value.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| config(format!("override `{spec}` is not key=value")))?;
    if path.is_empty() {
        return Err(config(format!("override `{spec}` has an empty key")));
    }
    let new: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
    let mut cur = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (pos, seg) in segments.iter().enumerate() {
        let last = pos + 1 == segments.len();
        match cur {
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| config(format!("override `{path}`: `{seg}` is not an index")))?;
                if idx >= items.len() {
                    return Err(config(format!(
                        "override `{path}`: index {idx} out of range ({} items)",
                        items.len()
                    )));
                }
                if last {
                    items[idx] = new;
                    return Ok(());
                }
                cur = &mut items[idx];
            }
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), new);
                    return Ok(());
                }
                cur = map
                    .entry(seg.to_string())
                    .or_insert_with(|| Value::Object(Default::default()));
            }
            other => {
                return Err(config(format!(
                    "override `{path}`: `{seg}` cannot descend into {other}"
                )))
            }
        }
    }
    Ok(())
}
