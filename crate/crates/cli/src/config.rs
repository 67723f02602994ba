//! Pipeline configuration: defaults, then a TOML file, then `VRID_*`
//! environment variables, then command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};
use vrid::dataset::ShapeExpansion;
use vrid::fusion::{FusionMode, TrainConfig};
use vrid::ocr::{DecoderConfig, OcrTrainConfig};
use vrid::synth::SynthSpec;

use crate::error::CliError;

pub const ENV_PREFIX: &str = "VRID_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding the ground-truth XML files.
    pub dataset: String,
    /// Frame root (`<frames>/<video>/<frame>.png`); empty means
    /// `<dataset>/frames`, or on-the-fly rendering for synthetic corpora.
    pub frames: String,
    /// Character label root for detector training; empty means `<dataset>/labels`.
    pub labels: String,
    pub output: String,
    /// Detector checkpoint; empty means `<output>/ocr.ckpt`.
    pub ocr_checkpoint: String,
    /// Two-stream checkpoint used by `match`; empty means `<output>/model_round1.ckpt`.
    pub model: String,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "data".into(),
            frames: String::new(),
            labels: String::new(),
            output: "out".into(),
            ocr_checkpoint: String::new(),
            model: String::new(),
        }
    }
}

impl Paths {
    fn or(value: &str, fallback: PathBuf) -> PathBuf {
        if value.is_empty() {
            fallback
        } else {
            PathBuf::from(value)
        }
    }

    pub fn dataset(&self) -> PathBuf {
        PathBuf::from(&self.dataset)
    }

    pub fn output(&self) -> PathBuf {
        PathBuf::from(&self.output)
    }

    pub fn labels(&self) -> PathBuf {
        Self::or(&self.labels, self.dataset().join("labels"))
    }

    pub fn ocr_checkpoint(&self) -> PathBuf {
        Self::or(&self.ocr_checkpoint, self.output().join("ocr.ckpt"))
    }

    pub fn model(&self) -> PathBuf {
        Self::or(&self.model, self.output().join("model_round1.ckpt"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsSection {
    /// Occurrences per vehicle and camera used for pairs; 0 keeps all.
    pub max_frames: usize,
}

impl Default for PairsSection {
    fn default() -> Self {
        Self { max_frames: 2 }
    }
}

impl PairsSection {
    pub fn limit(&self) -> Option<usize> {
        (self.max_frames > 0).then_some(self.max_frames)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Rounds evaluated by `eval`: `all` or a comma-separated list of 1..=5.
    pub rounds: String,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            rounds: "all".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcrSection {
    /// Sets whose labeled plates train the detector.
    pub sets: Vec<u8>,
    /// Labeled occurrences used per vehicle and camera.
    pub max_frames: usize,
    pub seed: u64,
    pub train: OcrTrainConfig,
    pub decoder: DecoderConfig,
}

impl Default for OcrSection {
    fn default() -> Self {
        Self {
            sets: vec![1, 2],
            max_frames: 1,
            seed: 0,
            train: OcrTrainConfig::default(),
            decoder: DecoderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub mode: FusionMode,
    /// Initialization seed of the shape stream and head.
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for FusionSection {
    fn default() -> Self {
        Self {
            mode: FusionMode::TwoStream,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub synth: SynthSpec,
    pub pairs: PairsSection,
    pub split: SplitSection,
    pub ocr: OcrSection,
    pub fusion: FusionSection,
    pub shape: ShapeExpansion,
}

impl PipelineConfig {
    /// Layers the sources in precedence order. `env` yields `(name, value)`
    /// pairs; only `VRID_<SECTION>_<KEY>` names of known keys are used.
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &[(String, String)],
    ) -> Result<Self, CliError> {
        let mut root = to_table(&PipelineConfig::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            let user: Table = text
                .parse()
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
            merge(&mut root, user, "")?;
        }
        let keys = leaf_keys(&root, "");
        for (name, raw) in env {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            if let Some(key) = keys.iter().find(|k| env_name(k) == rest) {
                set_key(&mut root, key, &raw)?;
            }
        }
        for (key, raw) in overrides {
            set_key(&mut root, key, raw)?;
        }
        let cfg: PipelineConfig = Value::Table(root)
            .try_into()
            .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.synth.validate()?;
        self.shape.validate()?;
        self.fusion.train.validate()?;
        if self.ocr.sets.is_empty() || self.ocr.sets.iter().any(|s| !(1..=5).contains(s)) {
            return Err(CliError::Usage("ocr.sets must list sets in 1..=5".into()));
        }
        if self.ocr.train.batch_size == 0 || self.ocr.max_frames == 0 {
            return Err(CliError::Usage(
                "ocr.train.batch_size and ocr.max_frames must be positive".into(),
            ));
        }
        self.rounds()?;
        Ok(())
    }

    /// Rounds selected by `split.rounds`, 1-based and ascending.
    pub fn rounds(&self) -> Result<Vec<usize>, CliError> {
        parse_rounds(&self.split.rounds)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml().as_bytes()))
    }
}

pub fn parse_rounds(spec: &str) -> Result<Vec<usize>, CliError> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok((1..=5).collect());
    }
    let mut out = Vec::new();
    for part in spec.split(',') {
        let r: usize = part.trim().parse().map_err(|_| {
            CliError::Usage(format!(
                "invalid round {part:?}; expected `all` or numbers 1..=5"
            ))
        })?;
        if !(1..=5).contains(&r) {
            return Err(CliError::Usage(format!("round {r} outside 1..=5")));
        }
        out.push(r);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn to_table<S: Serialize>(value: &S) -> Result<Table, CliError> {
    match Value::try_from(value).map_err(|e| CliError::Usage(e.to_string()))? {
        Value::Table(t) => Ok(t),
        _ => unreachable!("config serializes to a table"),
    }
}

/// `VRID_` suffix for a dotted key: `fusion.train.epochs` -> `FUSION_TRAIN_EPOCHS`.
pub fn env_name(key: &str) -> String {
    key.replace('.', "_").to_ascii_uppercase()
}

fn leaf_keys(table: &Table, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => out.extend(leaf_keys(t, &key)),
            _ => out.push(key),
        }
    }
    out
}

/// Overlays `user` on `base`, rejecting keys `base` does not have.
fn merge(base: &mut Table, user: Table, prefix: &str) -> Result<(), CliError> {
    for (k, v) in user {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let slot = base
            .get_mut(&k)
            .ok_or_else(|| CliError::Usage(format!("unknown config key {key}")))?;
        match (slot, v) {
            (Value::Table(b), Value::Table(u)) => merge(b, u, &key)?,
            (slot, v) => *slot = coerce(slot, v, &key)?,
        }
    }
    Ok(())
}

fn coerce(current: &Value, v: Value, key: &str) -> Result<Value, CliError> {
    Ok(match (current, v) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (Value::Table(_), _) => {
            return Err(CliError::Usage(format!("{key} is a section, not a value")))
        }
        (cur, v) if std::mem::discriminant(cur) == std::mem::discriminant(&v) => v,
        (cur, v) => {
            return Err(CliError::Usage(format!(
                "{key} expects a {}, got {}",
                cur.type_str(),
                v.type_str()
            )))
        }
    })
}

/// Sets a dotted key from its textual form, typed after the current value.
pub fn set_key(root: &mut Table, key: &str, raw: &str) -> Result<(), CliError> {
    let mut table = root;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        let slot = table
            .get_mut(part)
            .ok_or_else(|| CliError::Usage(format!("unknown config key {key}")))?;
        if parts.peek().is_none() {
            let parsed = match slot {
                Value::String(_) => Value::String(raw.to_string()),
                _ => parse_literal(raw)
                    .ok_or_else(|| CliError::Usage(format!("cannot parse {raw:?} for {key}")))?,
            };
            *slot = coerce(slot, parsed, key)?;
            return Ok(());
        }
        table = match slot {
            Value::Table(t) => t,
            _ => return Err(CliError::Usage(format!("unknown config key {key}"))),
        };
    }
    Err(CliError::Usage("empty config key".into()))
}

fn parse_literal(raw: &str) -> Option<Value> {
    let doc: Table = format!("v = {raw}").parse().ok()?;
    doc.get("v").cloned()
}

/// Splits a `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {s:?} is not KEY=VALUE")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}
