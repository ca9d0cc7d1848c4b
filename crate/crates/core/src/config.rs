//! Layered pipeline configuration.
//!
//! Values are merged as TOML tables in increasing priority: built-in
//! defaults, the config file, `SCPROOF_*` environment variables and finally
//! command-line overrides. Offline mode then coerces anything that would
//! leave the machine.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::detectors::DefectKind;
use crate::llm::{LlmConfig, LlmMode};
use crate::runner::{BackendMode, TestOutcome, TestStatus};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid configuration for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub enabled_defects: BTreeSet<DefectKind>,
    pub backend_mode: BackendMode,
    pub offline: bool,
    pub llm: LlmConfig,
    /// Compiler used for source inputs and for validating generated suites.
    pub solc_path: PathBuf,
    pub forge_path: PathBuf,
    pub kontrol_path: PathBuf,
    /// forge-std checkout linked into each generated project.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forge_std: Option<PathBuf>,
    pub workdir: PathBuf,
    pub fuzz_runs: u32,
    pub job_cap: usize,
    pub backend_timeout_secs: u64,
    pub template_dir: PathBuf,
    pub verdict_dir: PathBuf,
    pub stub_dir: PathBuf,
    /// Compile generated suites; structural checks only when false.
    pub compile_check: bool,
    pub force: bool,
    /// Lets offline runs still use locally installed forge/kontrol.
    pub allow_local_tools: bool,
    /// Scripted outcomes for the mock backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
}

/// Directory holding the shipped templates, verdict tables and stubs.
pub fn asset_root() -> PathBuf {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    manifest.ancestors().nth(2).unwrap_or(manifest).to_path_buf()
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let root = asset_root();
        PipelineConfig {
            enabled_defects: DefectKind::ALL.into_iter().collect(),
            backend_mode: BackendMode::Auto,
            offline: false,
            llm: LlmConfig::default(),
            solc_path: "solc".into(),
            forge_path: "forge".into(),
            kontrol_path: "kontrol".into(),
            forge_std: None,
            workdir: "scproof-work".into(),
            fuzz_runs: 256,
            job_cap: std::thread::available_parallelism().map_or(1, |n| n.get()),
            backend_timeout_secs: 600,
            template_dir: root.join("templates"),
            verdict_dir: root.join("verdicts"),
            stub_dir: root.join("stubs"),
            compile_check: true,
            force: false,
            allow_local_tools: false,
            mock_script: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Str,
    Bool,
    Int,
    Float,
    Kinds,
}

/// Every settable key, dotted for the `llm` section.
const KEYS: &[(&str, Shape)] = &[
    ("enabled_defects", Shape::Kinds),
    ("backend_mode", Shape::Str),
    ("offline", Shape::Bool),
    ("solc_path", Shape::Str),
    ("forge_path", Shape::Str),
    ("kontrol_path", Shape::Str),
    ("forge_std", Shape::Str),
    ("workdir", Shape::Str),
    ("fuzz_runs", Shape::Int),
    ("job_cap", Shape::Int),
    ("backend_timeout_secs", Shape::Int),
    ("template_dir", Shape::Str),
    ("verdict_dir", Shape::Str),
    ("stub_dir", Shape::Str),
    ("compile_check", Shape::Bool),
    ("force", Shape::Bool),
    ("allow_local_tools", Shape::Bool),
    ("mock_script", Shape::Str),
    ("llm.endpoint_url", Shape::Str),
    ("llm.model_id", Shape::Str),
    ("llm.api_key_env", Shape::Str),
    ("llm.temperature", Shape::Float),
    ("llm.max_output_tokens", Shape::Int),
    ("llm.request_timeout_secs", Shape::Int),
    ("llm.mode", Shape::Str),
    ("llm.max_in_flight", Shape::Int),
];

fn shape_of(key: &str) -> Option<Shape> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, s)| *s)
}

/// Environment variable for a key: `llm.model_id` → `SCPROOF_LLM_MODEL_ID`.
pub fn env_name(key: &str) -> String {
    format!("SCPROOF_{}", key.replace('.', "_").to_ascii_uppercase())
}

fn parse_kinds(raw: &str) -> Result<Vec<Value>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<DefectKind>().map(|k| Value::String(k.name().into())))
        .collect()
}

/// Typed TOML value for a string given on the command line or in the
/// environment.
fn typed(key: &str, raw: &str) -> Result<Value, ConfigError> {
    let shape = shape_of(key).ok_or_else(|| invalid(key, "unknown key"))?;
    let raw = raw.trim();
    Ok(match shape {
        Shape::Str => Value::String(raw.into()),
        Shape::Bool => match raw.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "on" => Value::Boolean(true),
            "0" | "false" | "no" | "off" => Value::Boolean(false),
            _ => return Err(invalid(key, format!("`{raw}` is not a boolean"))),
        },
        Shape::Int => Value::Integer(raw.parse().map_err(|_| invalid(key, format!("`{raw}` is not an integer")))?),
        Shape::Float => Value::Float(raw.parse().map_err(|_| invalid(key, format!("`{raw}` is not a number")))?),
        Shape::Kinds => Value::Array(parse_kinds(raw).map_err(|e| invalid(key, e))?),
    })
}

fn set(table: &mut Table, key: &str, value: Value) {
    match key.split_once('.') {
        Some((section, rest)) => {
            let sub = table.entry(section).or_insert_with(|| Value::Table(Table::new()));
            if let Value::Table(t) = sub {
                set(t, rest, value);
            }
        }
        None => {
            table.insert(key.into(), value);
        }
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Normalizes `enabled_defects` given in a file, which may use ids.
fn normalize_file(mut table: Table) -> Result<Table, ConfigError> {
    if let Some(v) = table.get_mut("enabled_defects") {
        let list = match v {
            Value::String(s) => parse_kinds(s),
            Value::Array(items) => items
                .iter()
                .map(|i| i.as_str().ok_or_else(|| "expected strings".to_string()))
                .map(|s| s.and_then(|s| s.parse::<DefectKind>().map(|k| Value::String(k.name().into()))))
                .collect(),
            _ => Err("expected a list of defect kinds".into()),
        };
        *v = Value::Array(list.map_err(|e| invalid("enabled_defects", e))?);
    }
    Ok(table)
}

/// `--set key=value` style overrides. Relative paths stay relative to the
/// working directory.
pub type Overrides = BTreeMap<String, String>;

/// Builds the effective configuration. `env` is consulted only for keys in
/// the known set, so unrelated `SCPROOF_*` variables are ignored.
pub fn load_config(
    file_path: Option<&Path>,
    cli: &Overrides,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<PipelineConfig, ConfigError> {
    let mut table = Table::try_from(PipelineConfig::default()).expect("defaults serialize");
    if let Some(path) = file_path {
        let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        let file: Table = toml::from_str(&text).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        merge(&mut table, normalize_file(file)?);
    }
    for (key, _) in KEYS {
        if let Some(raw) = env(&env_name(key)) {
            set(&mut table, key, typed(key, &raw)?);
        }
    }
    for (key, raw) in cli {
        set(&mut table, key, typed(key, raw)?);
    }
    let cfg: PipelineConfig =
        table.try_into().map_err(|e: toml::de::Error| invalid("config", e.message().to_string()))?;
    cfg.validated()
}

impl PipelineConfig {
    /// Range checks, then the offline coercions.
    pub fn validated(mut self) -> Result<Self, ConfigError> {
        if self.fuzz_runs == 0 {
            return Err(invalid("fuzz_runs", "must be a positive integer"));
        }
        if self.job_cap == 0 {
            return Err(invalid("job_cap", "must be a positive integer"));
        }
        if self.backend_timeout_secs == 0 {
            return Err(invalid("backend_timeout_secs", "must be a positive integer"));
        }
        if self.llm.max_in_flight == 0 {
            return Err(invalid("llm.max_in_flight", "must be a positive integer"));
        }
        if !(0.0..=2.0).contains(&self.llm.temperature) {
            return Err(invalid("llm.temperature", "must lie in [0, 2]"));
        }
        if self.offline {
            if self.llm.mode == LlmMode::Live {
                self.llm.mode = LlmMode::OfflineStub;
            }
            if !self.allow_local_tools {
                self.backend_mode = BackendMode::Mock;
            }
        }
        Ok(self)
    }

    /// Pretty TOML of the effective configuration.
    pub fn effective_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the canonical JSON of the effective configuration.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let bytes = serde_json::to_vec(&value).expect("value serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Reads a mock script: a flat TOML map from method name to either a status
/// string or `{ status = "...", detail = "..." }`.
pub fn load_mock_script(path: &Path) -> Result<BTreeMap<String, TestOutcome>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid("mock_script", format!("{}: {e}", path.display())))?;
    parse_mock_script(&text)
}

pub fn parse_mock_script(text: &str) -> Result<BTreeMap<String, TestOutcome>, ConfigError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Status(String),
        Full { status: String, detail: Option<String> },
    }
    let raw: BTreeMap<String, Entry> =
        toml::from_str(text).map_err(|e| invalid("mock_script", e.message().to_string()))?;
    raw.into_iter()
        .map(|(method, entry)| {
            let (status, detail) = match entry {
                Entry::Status(s) => (s, None),
                Entry::Full { status, detail } => (status, detail),
            };
            let status: TestStatus =
                status.parse().map_err(|e: String| invalid("mock_script", format!("{method}: {e}")))?;
            let outcome = match detail {
                Some(d) => TestOutcome::with_detail(status, d),
                None => TestOutcome::new(status),
            };
            Ok((method, outcome))
        })
        .collect()
}
