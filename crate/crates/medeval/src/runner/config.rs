//! Run configuration: a TOML file with one section per command plus the
//! endpoint block, every key overridable from the command line. Auth tokens
//! are never read from the file, only from the environment variable the
//! endpoint section names.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::EndpointConfig;
use crate::error::{Error, Result};
use crate::merge::{MergeConfig, DEFAULT_PARALLEL_THRESHOLD, DEFAULT_T};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Eval,
    Translate,
    Judge,
    Filter,
    Merge,
}

impl CommandKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CommandKind::Eval => "eval",
            CommandKind::Translate => "translate",
            CommandKind::Judge => "judge",
            CommandKind::Filter => "filter",
            CommandKind::Merge => "merge",
        }
    }
}

fn default_mode() -> String {
    "generative".into()
}
fn default_one() -> usize {
    1
}
fn default_top_p() -> f64 {
    1.0
}
fn default_max_tokens() -> usize {
    512
}
fn default_normalization() -> String {
    "raw".into()
}
fn default_tokenize() -> String {
    "whitespace".into()
}
fn default_translate_template() -> String {
    "translation".into()
}
fn default_judge_rubric() -> String {
    "judge_rubric".into()
}
fn default_filter_rubric() -> String {
    "quality_rubric".into()
}
fn default_threshold() -> u8 {
    7
}
fn default_t() -> f64 {
    DEFAULT_T
}
fn default_parallel_threshold() -> f64 {
    DEFAULT_PARALLEL_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub dataset: PathBuf,
    pub format: String,
    /// Check counts against the bundled manifests before running.
    #[serde(default)]
    pub check_manifest: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_dataset: Option<PathBuf>,
    /// Template names from the registry, or paths to template files;
    /// ensemble variants rotate through them in order.
    pub templates: Vec<String>,
    #[serde(default)]
    pub k: usize,
    /// "generative" or "loglikelihood".
    #[serde(default = "default_mode")]
    pub mode: String,
    /// Send prompts as one flattened text block over the plain completions
    /// route instead of chat messages (for non-chat endpoints).
    #[serde(default)]
    pub single_block: bool,
    /// Number of self-consistency votes per item (generative mode).
    #[serde(default = "default_one")]
    pub ensemble: usize,
    /// Present each variant's choices in an independently shuffled order.
    #[serde(default)]
    pub permute: bool,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_normalization")]
    pub normalization: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateSection {
    pub dataset: PathBuf,
    #[serde(default = "default_translate_template")]
    pub template: String,
    #[serde(default = "default_tokenize")]
    pub tokenize: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeSection {
    /// EHR task items (ehr_task format).
    pub dataset: PathBuf,
    /// Candidate answer files: model name -> JSONL of {item_id, answer}.
    pub answers: BTreeMap<String, PathBuf>,
    #[serde(default = "default_judge_rubric")]
    pub rubric: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub pairs: PathBuf,
    #[serde(default = "default_threshold")]
    pub threshold: u8,
    #[serde(default = "default_filter_rubric")]
    pub rubric: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeSection {
    pub path_a: PathBuf,
    pub path_b: PathBuf,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_parallel_threshold")]
    pub threshold: f64,
    pub output: PathBuf,
}

impl MergeSection {
    pub fn to_merge_config(&self) -> MergeConfig {
        MergeConfig {
            path_a: self.path_a.clone(),
            path_b: self.path_b.clone(),
            t: self.t,
            parallel_threshold: self.threshold,
            output_path: self.output.clone(),
        }
    }
}

/// The whole config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Which command this config drives; the CLI subcommand overrides it and
    /// `report` requires it (or infers it from the single section present).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translate: Option<TranslateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge: Option<MergeSection>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// The command named in the file, or the only section present.
    pub fn implied_command(&self) -> Result<CommandKind> {
        if let Some(name) = &self.command {
            return parse_command(name);
        }
        let present: Vec<CommandKind> = [
            (self.eval.is_some(), CommandKind::Eval),
            (self.translate.is_some(), CommandKind::Translate),
            (self.judge.is_some(), CommandKind::Judge),
            (self.filter.is_some(), CommandKind::Filter),
            (self.merge.is_some(), CommandKind::Merge),
        ]
        .into_iter()
        .filter_map(|(present, kind)| present.then_some(kind))
        .collect();
        match present.as_slice() {
            [single] => Ok(*single),
            [] => Err(Error::Config("config has no command section".into())),
            _ => Err(Error::Config(
                "config has several sections; set `command = \"...\"` or use a subcommand".into(),
            )),
        }
    }

    /// Apply one `section.key=value` (or `key=value` for top level) override.
    pub fn apply_override(text: &mut toml::Value, spec: &str) -> Result<()> {
        let (path, raw) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override must be KEY=VALUE: {spec:?}")))?;
        // Type the value by parsing it as a one-line TOML document; anything
        // that does not parse (e.g. a bare word) is a string.
        let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Value>() {
            Ok(toml::Value::Table(table)) => table
                .into_iter()
                .next()
                .map(|(_, v)| v)
                .unwrap_or_else(|| toml::Value::String(raw.trim().to_string())),
            _ => toml::Value::String(raw.trim().to_string()),
        };
        let mut node = text;
        let parts: Vec<&str> = path.trim().split('.').collect();
        for key in &parts[..parts.len() - 1] {
            node = node
                .as_table_mut()
                .ok_or_else(|| {
                    Error::Config(format!("override path {path:?} crosses a non-table"))
                })?
                .entry((*key).to_string())
                .or_insert(toml::Value::Table(Default::default()));
        }
        node.as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path {path:?} crosses a non-table")))?
            .insert(parts[parts.len() - 1].to_string(), parsed);
        Ok(())
    }

    /// Load with `--set` overrides applied before deserialization.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut value: toml::Value = text
            .parse()
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        for spec in overrides {
            RunConfig::apply_override(&mut value, spec)?;
        }
        value
            .try_into()
            .map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn endpoint(&self) -> Result<EndpointConfig> {
        self.endpoint
            .clone()
            .ok_or_else(|| Error::Config("config needs an [endpoint] section".into()))
    }
}

fn parse_command(name: &str) -> Result<CommandKind> {
    match name {
        "eval" => Ok(CommandKind::Eval),
        "translate" => Ok(CommandKind::Translate),
        "judge" => Ok(CommandKind::Judge),
        "filter" => Ok(CommandKind::Filter),
        "merge" => Ok(CommandKind::Merge),
        other => Err(Error::Config(format!("unknown command: {other}"))),
    }
}

/// Digest of the effective run semantics: command, config, and seed. Output
/// and replay locations deliberately stay out of it.
pub fn config_digest(command: CommandKind, config: &RunConfig, seed: u64) -> String {
    let canonical = serde_json::json!({
        "command": command.as_str(),
        "config": serde_json::to_value(config).expect("config serializes"),
        "seed": seed,
    });
    let mut hasher = Sha256::new();
    hasher.update(canonical.to_string().as_bytes());
    hex::encode(hasher.finalize())
}
