//! Run configuration: defaults, then a preset, then a JSON file, then
//! `--kebab-case` flags named after config keys.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use ssrgan::metrics::AasConfig;
use ssrgan::model::ModelConfig;
use ssrgan::synth::SynthConfig;
use ssrgan::trainer::{Preset, TrainConfig};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Output directory.
    pub out: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub n_train_a: usize,
    pub n_train_b: usize,
    pub n_eval: usize,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: Paths,
    pub preprocess: PreprocessConfig,
    pub eval: EvalConfig,
    pub gradcheck: GradcheckConfig,
    pub features: FeaturesConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: None,
            preset: None,
            n_train_a: 512,
            n_train_b: 512,
            n_eval: 64,
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            paths: Paths::default(),
            preprocess: PreprocessConfig::default(),
            eval: EvalConfig::default(),
            gradcheck: GradcheckConfig::default(),
            features: FeaturesConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Directory written by `synth`.
    pub data: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub before: Option<PathBuf>,
    pub after: Option<PathBuf>,
    pub clean: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub target_hz: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            lo_hz: 0.1,
            hi_hz: 70.0,
            target_hz: 250.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Aas,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub baseline: Option<Baseline>,
    pub aas: AasConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub seeds: Vec<u64>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { seeds: vec![0, 1, 2] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSide {
    A,
    B,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    pub side: FeatureSide,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self {
            side: FeatureSide::Both,
        }
    }
}

/// One `--key value` pair with the key already converted to a dotted
/// snake_case path.
#[derive(Clone, Debug, PartialEq)]
struct Flag {
    key: String,
    raw: String,
}

fn snake(key: &str) -> String {
    key.replace('-', "_")
}

/// Splits trailing arguments into an optional config path and overrides.
fn parse_flags(args: &[String]) -> Result<(Option<PathBuf>, Vec<Flag>), CliError> {
    let mut config = None;
    let mut flags = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let tok = &args[i];
        let body = tok
            .strip_prefix("--")
            .filter(|b| !b.is_empty())
            .ok_or_else(|| CliError::Usage(format!("unexpected argument {tok:?}")))?;
        let (key, raw) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => match args.get(i + 1) {
                Some(v) if !is_flag(v) => {
                    i += 1;
                    (body.to_string(), v.clone())
                }
                _ => (body.to_string(), "true".to_string()),
            },
        };
        i += 1;
        if key == "config" {
            config = Some(PathBuf::from(raw));
        } else {
            flags.push(Flag { key: snake(&key), raw });
        }
    }
    Ok((config, flags))
}

// Negative numbers are values, not flags.
fn is_flag(s: &str) -> bool {
    s.starts_with("--") && s.len() > 2 && !s[2..].starts_with(|c: char| c.is_ascii_digit() || c == '.')
}

/// Every leaf of `v` keyed by its final path component.
fn leaf_index(v: &Value) -> BTreeMap<String, Vec<Vec<String>>> {
    fn walk(v: &Value, path: &mut Vec<String>, out: &mut BTreeMap<String, Vec<Vec<String>>>) {
        match v {
            Value::Object(m) if !m.is_empty() => {
                for (k, child) in m {
                    path.push(k.clone());
                    walk(child, path, out);
                    path.pop();
                }
            }
            _ => {
                if let Some(last) = path.last() {
                    out.entry(last.clone()).or_default().push(path.clone());
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(v, &mut Vec::new(), &mut out);
    out
}

fn resolve(index: &BTreeMap<String, Vec<Vec<String>>>, root: &Value, key: &str) -> Result<Vec<Vec<String>>, CliError> {
    if key.contains('.') {
        let path: Vec<String> = key.split('.').map(str::to_string).collect();
        return match lookup(root, &path) {
            Some(_) => Ok(vec![path]),
            None => Err(CliError::Config(format!("unknown key {key:?}"))),
        };
    }
    match index.get(key).map(Vec::as_slice) {
        None | Some([]) => Err(CliError::Config(format!("unknown key {key:?}"))),
        Some([one]) => Ok(vec![one.clone()]),
        // `--seed` seeds data, initialization and minibatch order together.
        Some(many) if key == "seed" => Ok(many.to_vec()),
        Some(many) => Err(CliError::Config(format!(
            "key {key:?} is ambiguous; use one of {}",
            many.iter().map(|p| p.join(".")).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn lookup<'a>(root: &'a Value, path: &[String]) -> Option<&'a Value> {
    path.iter().try_fold(root, |v, k| v.as_object()?.get(k))
}

fn lookup_mut<'a>(root: &'a mut Value, path: &[String]) -> Option<&'a mut Value> {
    path.iter().try_fold(root, |v, k| v.as_object_mut()?.get_mut(k))
}

/// Interprets a flag value against the type of the value it replaces.
fn flag_value(current: &Value, raw: &str) -> Value {
    match current {
        Value::String(_) | Value::Null => Value::String(raw.to_string()),
        Value::Array(_) if !raw.trim_start().starts_with('[') => {
            serde_json::from_str(&format!("[{raw}]")).unwrap_or_else(|_| Value::String(raw.to_string()))
        }
        _ => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())),
    }
}

/// Deep-merges `over` into `base`, rejecting keys `base` does not have.
/// Tagged objects whose `kind` changes are replaced whole.
fn merge(base: &mut Value, over: Value, path: &str) -> Result<(), CliError> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) if b.get("kind").is_none() || b.get("kind") == o.get("kind") => {
            for (k, v) in o {
                let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &child)?,
                    None => return Err(CliError::Config(format!("unknown key {child:?}"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
    }
    Ok(v)
}

fn to_value(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

impl RunConfig {
    /// Builds the effective config from trailing command-line arguments.
    pub fn from_args(args: &[String]) -> Result<Self, CliError> {
        let (config_path, flags) = parse_flags(args)?;
        let file = config_path.as_deref().map(read_json).transpose()?;

        let preset = flags
            .iter()
            .rev()
            .find(|f| f.key == "preset")
            .map(|f| f.raw.clone())
            .or_else(|| file.as_ref()?.get("preset")?.as_str().map(str::to_string));
        let mut base = RunConfig::default();
        if let Some(name) = preset {
            let p = Preset::parse(&name).map_err(|e| CliError::Config(format!("preset: {e}")))?;
            base.preset = Some(p);
            base.train = p.apply(base.train);
        }

        let mut v = to_value(&base);
        if let Some(file) = file {
            merge(&mut v, file, "")?;
        }
        let index = leaf_index(&to_value(&RunConfig::default()));
        for f in &flags {
            for path in resolve(&index, &v, &f.key)? {
                let slot = lookup_mut(&mut v, &path).expect("resolved paths exist");
                *slot = flag_value(slot, &f.raw);
            }
        }

        let mut cfg: RunConfig = serde_path_to_error::deserialize(v)
            .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.model.sharing = cfg.train.sharing_enabled;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |module: &'static str| move |e: ssrgan::Error| CliError::Config(format!("{module}: {e}"));
        self.synth.validate().map_err(wrap("synth"))?;
        self.train.validate().map_err(wrap("train"))?;
        self.model.layout().map_err(wrap("model"))?;
        if self.n_train_a == 0 || self.n_train_b == 0 || self.n_eval == 0 {
            return Err(CliError::Config("n_train_a, n_train_b and n_eval must be >= 1".into()));
        }
        if self.gradcheck.seeds.is_empty() {
            return Err(CliError::Config("gradcheck.seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("out: an output directory is required (--out DIR)".into()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
