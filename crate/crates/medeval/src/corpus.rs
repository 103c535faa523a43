//! Benchmark dataset loading, validation, and exemplar selection.
//!
//! Every supported benchmark is normalized into [`BenchmarkItem`], a single
//! in-memory schema shared by the prompt engine and the scorers. Input files
//! are line-delimited JSON records; the required keys per format are listed
//! on [`load_benchmark`].

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// The benchmark families the toolkit understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Medqa,
    Medmcqa,
    Pubmedqa,
    Mmlu,
    Translation,
    EhrTask,
}

impl Benchmark {
    pub fn parse(s: &str) -> Result<Benchmark> {
        match s {
            "medqa" => Ok(Benchmark::Medqa),
            "medmcqa" => Ok(Benchmark::Medmcqa),
            "pubmedqa" => Ok(Benchmark::Pubmedqa),
            "mmlu" => Ok(Benchmark::Mmlu),
            "translation" => Ok(Benchmark::Translation),
            "ehr_task" => Ok(Benchmark::EhrTask),
            other => Err(Error::Config(format!(
                "unknown benchmark format id: {other}"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Benchmark::Medqa => "medqa",
            Benchmark::Medmcqa => "medmcqa",
            Benchmark::Pubmedqa => "pubmedqa",
            Benchmark::Mmlu => "mmlu",
            Benchmark::Translation => "translation",
            Benchmark::EhrTask => "ehr_task",
        }
    }

    /// Multiple-choice benchmarks carry choices and a gold label; the
    /// free-text formats (translation, EHR tasks) carry a reference instead.
    pub fn has_choices(&self) -> bool {
        !matches!(self, Benchmark::Translation | Benchmark::EhrTask)
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Dev,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split: {other}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

/// One benchmark record in the unified schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub benchmark: Benchmark,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    pub split: Split,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Choice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

const YNM: [&str; 3] = ["yes", "no", "maybe"];

impl BenchmarkItem {
    pub fn labels(&self) -> Vec<&str> {
        self.choices.iter().map(|c| c.label.as_str()).collect()
    }

    pub fn gold_choice(&self) -> Option<&Choice> {
        let gold = self.gold.as_deref()?;
        self.choices.iter().find(|c| c.label == gold)
    }

    /// Check every schema invariant, returning the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.benchmark.has_choices() {
            let labels = self.labels();
            let unique: BTreeSet<&str> = labels.iter().copied().collect();
            if unique.len() != labels.len() {
                return Err("duplicate choice labels".into());
            }
            let letter_canon: Vec<String> = (0..labels.len())
                .map(|i| ((b'A' + i as u8) as char).to_string())
                .collect();
            let is_letters = labels
                .iter()
                .zip(letter_canon.iter())
                .all(|(a, b)| *a == b.as_str());
            let is_ynm = labels == YNM;
            if !is_letters && !is_ynm {
                return Err(format!(
                    "choice labels must be A,B,C,D(,E) in order or exactly yes,no,maybe; got {labels:?}"
                ));
            }
            match self.gold.as_deref() {
                None => return Err("missing gold label".into()),
                Some(g) if !labels.contains(&g) => {
                    return Err(format!("gold label {g:?} not among choices {labels:?}"));
                }
                _ => {}
            }
            let n = self.choices.len();
            let count_ok = match self.benchmark {
                Benchmark::Medqa => n == 4 || n == 5,
                Benchmark::Medmcqa | Benchmark::Mmlu => n == 4,
                Benchmark::Pubmedqa => is_ynm,
                _ => unreachable!(),
            };
            if !count_ok {
                return Err(format!("{} items cannot have {n} choices", self.benchmark));
            }
        } else {
            if !self.choices.is_empty() || self.gold.is_some() {
                return Err(format!(
                    "{} items carry no choices or gold label",
                    self.benchmark
                ));
            }
            if self.benchmark == Benchmark::Translation
                && self.reference.as_deref().is_none_or(str::is_empty)
            {
                return Err("translation items require a non-empty reference".into());
            }
        }
        if self.question.is_empty() {
            return Err("empty question".into());
        }
        Ok(())
    }
}

/// Expected record count for one (benchmark, subset, split) stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub benchmark: Benchmark,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    pub split: Split,
    pub expected_count: usize,
}

/// The bundled manifest file with the published benchmark sizes.
pub fn bundled_manifest_jsonl() -> &'static str {
    include_str!("../assets/manifests.jsonl")
}

/// Manifests parsed from the bundled file.
pub fn bundled_manifests() -> Vec<DatasetManifest> {
    bundled_manifest_jsonl()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("bundled manifest file is valid"))
        .collect()
}

/// Look up the bundled manifest for one stream, if any.
pub fn bundled_manifest(
    benchmark: Benchmark,
    subset: Option<&str>,
    split: Split,
) -> Option<DatasetManifest> {
    bundled_manifests()
        .into_iter()
        .find(|m| m.benchmark == benchmark && m.subset.as_deref() == subset && m.split == split)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    CountMismatch { expected: usize, actual: usize },
    DuplicateId { id: String },
    InvariantViolation { id: String, message: String },
    StreamMismatch { id: String, message: String },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::CountMismatch { expected, actual } => {
                write!(f, "count mismatch: expected {expected}, got {actual}")
            }
            Finding::DuplicateId { id } => write!(f, "duplicate id: {id}"),
            Finding::InvariantViolation { id, message } => {
                write!(f, "invariant violation on {id}: {message}")
            }
            Finding::StreamMismatch { id, message } => {
                write!(f, "stream mismatch on {id}: {message}")
            }
        }
    }
}

/// Outcome of checking a loaded item list against a manifest. Empty findings
/// mean the check passed; problems are reported, never raised.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            return write!(f, "ok");
        }
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

/// Check count, id uniqueness, and schema invariants for one dataset stream.
pub fn validate_manifest(items: &[BenchmarkItem], manifest: &DatasetManifest) -> ValidationReport {
    let mut findings = Vec::new();
    if items.len() != manifest.expected_count {
        findings.push(Finding::CountMismatch {
            expected: manifest.expected_count,
            actual: items.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for item in items {
        if !seen.insert(item.id.as_str()) {
            findings.push(Finding::DuplicateId {
                id: item.id.clone(),
            });
        }
        if item.benchmark != manifest.benchmark
            || item.subset != manifest.subset
            || item.split != manifest.split
        {
            findings.push(Finding::StreamMismatch {
                id: item.id.clone(),
                message: format!(
                    "item is {}/{}/{}, manifest wants {}/{}/{}",
                    item.benchmark,
                    item.subset.as_deref().unwrap_or("-"),
                    item.split,
                    manifest.benchmark,
                    manifest.subset.as_deref().unwrap_or("-"),
                    manifest.split
                ),
            });
        }
        if let Err(message) = item.check_invariants() {
            findings.push(Finding::InvariantViolation {
                id: item.id.clone(),
                message,
            });
        }
    }
    ValidationReport { findings }
}

/// Deterministically pick `k` exemplars from a dev split.
///
/// Exemplars come back in draw order; the remainder keeps input order. The
/// two halves always partition the input.
pub fn split_exemplars(
    items: &[BenchmarkItem],
    k: usize,
    seed: u64,
) -> Result<(Vec<BenchmarkItem>, Vec<BenchmarkItem>)> {
    if k > items.len() {
        return Err(Error::Config(format!(
            "requested {k} exemplars but only {} items are available",
            items.len()
        )));
    }
    if let Some(item) = items.iter().find(|i| i.split != Split::Dev) {
        return Err(Error::Config(format!(
            "exemplars must come from a dev split; item {} is from {}",
            item.id, item.split
        )));
    }
    let mut indices: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let chosen: BTreeSet<usize> = indices[..k].iter().copied().collect();
    let exemplars = indices[..k].iter().map(|&i| items[i].clone()).collect();
    let remainder = items
        .iter()
        .enumerate()
        .filter(|(i, _)| !chosen.contains(i))
        .map(|(_, item)| item.clone())
        .collect();
    Ok((exemplars, remainder))
}

fn str_field(record: &Value, key: &str) -> std::result::Result<String, String> {
    match record.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(format!("field {key:?} must be a string")),
        None => Err(format!("missing required field {key:?}")),
    }
}

fn opt_str_field(record: &Value, key: &str) -> std::result::Result<Option<String>, String> {
    match record.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(format!("field {key:?} must be a string")),
    }
}

fn index_field(record: &Value, key: &str, max: usize) -> std::result::Result<usize, String> {
    let v = record
        .get(key)
        .ok_or_else(|| format!("missing required field {key:?}"))?;
    let idx = v
        .as_u64()
        .ok_or_else(|| format!("field {key:?} must be a non-negative integer"))?;
    if idx as usize >= max {
        return Err(format!("field {key:?} out of range: {idx} >= {max}"));
    }
    Ok(idx as usize)
}

fn letter(i: usize) -> String {
    ((b'A' + i as u8) as char).to_string()
}

fn parse_record(
    record: &Value,
    format: Benchmark,
    line: usize,
) -> std::result::Result<BenchmarkItem, String> {
    let id = opt_str_field(record, "id")?.unwrap_or_else(|| format!("{format}-{line:05}"));
    let split = match opt_str_field(record, "split")? {
        Some(s) => Split::parse(&s).map_err(|e| e.to_string())?,
        None => Split::Test,
    };
    let mut item = BenchmarkItem {
        id,
        benchmark: format,
        subset: None,
        split,
        question: String::new(),
        context: None,
        choices: Vec::new(),
        gold: None,
        explanation: None,
        reference: None,
    };
    match format {
        Benchmark::Medqa => {
            item.question = str_field(record, "question")?;
            let options = record
                .get("options")
                .and_then(Value::as_object)
                .ok_or("field \"options\" must be a label-to-text object")?;
            let mut labels: Vec<&String> = options.keys().collect();
            labels.sort();
            item.choices = labels
                .iter()
                .map(|label| {
                    let text = options[*label]
                        .as_str()
                        .ok_or_else(|| format!("option {label:?} must be a string"))?;
                    Ok(Choice {
                        label: (*label).clone(),
                        text: text.to_string(),
                    })
                })
                .collect::<std::result::Result<_, String>>()?;
            item.gold = Some(str_field(record, "answer")?);
        }
        Benchmark::Medmcqa => {
            item.question = str_field(record, "question")?;
            let texts = ["opa", "opb", "opc", "opd"]
                .iter()
                .map(|k| str_field(record, k))
                .collect::<std::result::Result<Vec<_>, String>>()?;
            let cop = index_field(record, "cop", 4)?;
            item.choices = texts
                .into_iter()
                .enumerate()
                .map(|(i, text)| Choice {
                    label: letter(i),
                    text,
                })
                .collect();
            item.gold = Some(letter(cop));
            item.explanation = opt_str_field(record, "exp")?;
        }
        Benchmark::Pubmedqa => {
            item.question = str_field(record, "question")?;
            item.context = Some(match record.get("context") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Array(sections)) => {
                    let parts = sections
                        .iter()
                        .map(|s| {
                            s.as_str()
                                .map(str::to_string)
                                .ok_or("context sections must be strings".to_string())
                        })
                        .collect::<std::result::Result<Vec<_>, String>>()?;
                    parts.join("\n\n")
                }
                _ => return Err("field \"context\" must be a string or string array".into()),
            });
            item.choices = YNM
                .iter()
                .map(|l| Choice {
                    label: (*l).to_string(),
                    text: (*l).to_string(),
                })
                .collect();
            let decision = str_field(record, "final_decision")?.to_lowercase();
            item.gold = Some(decision);
        }
        Benchmark::Mmlu => {
            item.question = str_field(record, "question")?;
            let choices = record
                .get("choices")
                .and_then(Value::as_array)
                .ok_or("field \"choices\" must be an array")?;
            if choices.len() != 4 {
                return Err(format!(
                    "mmlu records need 4 choices, got {}",
                    choices.len()
                ));
            }
            item.choices = choices
                .iter()
                .enumerate()
                .map(|(i, text)| {
                    let text = text.as_str().ok_or("choices must be strings")?;
                    Ok(Choice {
                        label: letter(i),
                        text: text.to_string(),
                    })
                })
                .collect::<std::result::Result<_, String>>()?;
            let answer = index_field(record, "answer", 4)?;
            item.gold = Some(letter(answer));
            item.subset = Some(str_field(record, "subset")?);
        }
        Benchmark::Translation => {
            item.question = str_field(record, "source")?;
            item.reference = Some(str_field(record, "reference")?);
        }
        Benchmark::EhrTask => {
            item.subset = Some(str_field(record, "task")?);
            item.question = str_field(record, "input")?;
            item.reference = opt_str_field(record, "reference")?;
        }
    }
    item.check_invariants()?;
    Ok(item)
}

/// Load a line-delimited benchmark file into the unified schema.
///
/// Required keys per format:
/// - `medqa`: `question`, `options` (label-to-text map), `answer`
/// - `medmcqa`: `question`, `opa`..`opd`, `cop` (0-based index), `exp`
/// - `pubmedqa`: `question`, `context` (string or section array), `final_decision`
/// - `mmlu`: `question`, `choices` (4 strings), `answer` (0-based), `subset`
/// - `translation`: `source`, `reference`
/// - `ehr_task`: `task`, `input`, `reference`
///
/// Every format also accepts optional `id` and `split` ("dev"/"test", default
/// test) keys. A record that violates an invariant aborts the load with its
/// line number; skipping records would silently corrupt accuracy denominators.
pub fn load_benchmark(path: &Path, format: Benchmark) -> Result<Vec<BenchmarkItem>> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let record: Value = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.display().to_string(),
            line: line_no,
            message: format!("invalid json: {e}"),
        })?;
        let item = parse_record(&record, format, line_no).map_err(|message| Error::Malformed {
            path: path.display().to_string(),
            line: line_no,
            message,
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Parse unified-schema items from a reader, one JSON record per line.
pub fn read_items(reader: impl BufRead) -> Result<Vec<BenchmarkItem>> {
    let mut items = Vec::new();
    for line in reader.lines() {
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&text)?);
    }
    Ok(items)
}

pub fn load_items(path: &Path) -> Result<Vec<BenchmarkItem>> {
    read_items(BufReader::new(File::open(path)?))
}

/// Serialize unified-schema items, one JSON record per line.
pub fn write_items(mut writer: impl Write, items: &[BenchmarkItem]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// The bundled 20-item mini benchmark used by offline smoke runs.
pub fn mini_benchmark_jsonl() -> &'static str {
    include_str!("../assets/mini/mini_medqa.jsonl")
}

pub fn mini_benchmark() -> Vec<BenchmarkItem> {
    let reader = BufReader::new(mini_benchmark_jsonl().as_bytes());
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let text = line.expect("embedded asset");
        if text.trim().is_empty() {
            continue;
        }
        let record: Value = serde_json::from_str(&text).expect("embedded asset is valid json");
        items.push(parse_record(&record, Benchmark::Medqa, idx + 1).expect("embedded asset"));
    }
    items
}
