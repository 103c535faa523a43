//! Instruction-data quality scoring and threshold filtering.
//!
//! Pairs are scored 0-10 by a scorer endpoint using the quality rubric;
//! everything below the threshold is removed before training. Responses the
//! scorer cannot grade are quarantined rather than scored 0, so an outage
//! never silently deletes data.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judge::parse_verdict_score;

/// One instruction-tuning pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub instruction: String,
    pub response: String,
    #[serde(default)]
    pub source_tag: String,
}

impl QaPair {
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.instruction.is_empty() {
            return Err("empty instruction".into());
        }
        if self.response.is_empty() {
            return Err("empty response".into());
        }
        Ok(())
    }
}

/// A scored pair; `retained` reflects the threshold applied by [`filter`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityRecord {
    pub pair_id: String,
    pub score: u8,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Keep pairs scoring at or above this; scores below are removed.
    pub threshold: u8,
    pub rubric_template: String,
    pub max_tokens: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            threshold: 7,
            rubric_template: "quality_rubric".into(),
            max_tokens: 256,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold > 10 {
            return Err(Error::Config(format!(
                "threshold must be 0..=10, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Parse a scorer response into a 0-10 score (same last-`Score:`-marker rule
/// as the judge).
pub fn parse_quality_score(text: &str) -> Result<u8> {
    parse_verdict_score(text)
}

/// Render the scorer prompt for one pair. The rubric's `{question}` slot
/// takes the instruction and `{answer}` the response.
pub fn render_quality_prompt(
    pair: &QaPair,
    rubric: &crate::prompt::TemplateSpec,
) -> crate::prompt::RenderedPrompt {
    use crate::prompt::{fill, Message, RenderedPrompt};
    let user = fill(
        &rubric.item_pattern,
        &[
            ("question", pair.instruction.as_str()),
            ("answer", pair.response.as_str()),
        ],
    );
    let mut messages = Vec::with_capacity(2);
    if !rubric.system_text.is_empty() {
        messages.push(Message::system(rubric.system_text.clone()));
    }
    messages.push(Message::user(user));
    RenderedPrompt {
        item_id: pair.id.clone(),
        template_name: rubric.name.clone(),
        messages,
        label_map: BTreeMap::new(),
        permutation_seed: None,
    }
}

/// Score one pair through the scorer endpoint.
///
/// The response is parsed with the last-`Score:`-marker rule; an unparseable
/// or out-of-range response is an error so the caller can quarantine the
/// pair instead of inventing a zero.
pub fn score_pair(
    client: &crate::client::Client,
    rubric: &crate::prompt::TemplateSpec,
    pair: &QaPair,
    config: &FilterConfig,
) -> Result<QualityRecord> {
    let prompt = render_quality_prompt(pair, rubric);
    let mut request = crate::client::GenerationRequest::new(prompt.messages);
    request.max_tokens = config.max_tokens;
    let result = client.generate(&request)?;
    let score = parse_quality_score(&result.samples[0].text)?;
    Ok(QualityRecord {
        pair_id: pair.id.clone(),
        score,
        retained: score >= config.threshold,
    })
}

/// Score a whole pair list through the client's bounded batch runner;
/// per-pair errors stay in their slot.
pub fn score_pairs(
    client: &crate::client::Client,
    rubric: &crate::prompt::TemplateSpec,
    pairs: &[QaPair],
    config: &FilterConfig,
) -> Vec<Result<QualityRecord>> {
    client.run_batch(pairs, |pair| score_pair(client, rubric, pair, config))
}

/// Partition records at the threshold: retained means `score >= threshold`.
///
/// The returned records carry refreshed `retained` flags; together the two
/// sides are exactly the input.
pub fn filter(
    records: &[QualityRecord],
    threshold: u8,
) -> (Vec<QualityRecord>, Vec<QualityRecord>) {
    let mut retained = Vec::new();
    let mut removed = Vec::new();
    for record in records {
        let keep = record.score >= threshold;
        let record = QualityRecord {
            retained: keep,
            ..record.clone()
        };
        if keep {
            retained.push(record);
        } else {
            removed.push(record);
        }
    }
    (retained, removed)
}

/// Score frequencies over the 0..=10 bins.
pub fn score_histogram(records: &[QualityRecord]) -> [u64; 11] {
    let mut bins = [0u64; 11];
    for record in records {
        bins[record.score.min(10) as usize] += 1;
    }
    bins
}

/// CSV rows `score,count` for one histogram.
pub fn histogram_csv(bins: &[u64; 11]) -> String {
    let mut out = String::from("score,count\n");
    for (score, count) in bins.iter().enumerate() {
        out.push_str(&format!("{score},{count}\n"));
    }
    out
}

/// Load instruction pairs from a line-delimited file; invariant violations
/// abort with their line number.
pub fn load_pairs(path: &Path) -> Result<Vec<QaPair>> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    let mut seen = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let pair: QaPair = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.display().to_string(),
            line: line_no,
            message: format!("invalid json: {e}"),
        })?;
        if let Err(message) = pair.check_invariants() {
            return Err(Error::Malformed {
                path: path.display().to_string(),
                line: line_no,
                message,
            });
        }
        if let Some(previous) = seen.insert(pair.id.clone(), line_no) {
            return Err(Error::Malformed {
                path: path.display().to_string(),
                line: line_no,
                message: format!("duplicate pair id {:?} (first at line {previous})", pair.id),
            });
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_pairs(mut writer: impl Write, pairs: &[QaPair]) -> Result<()> {
    for pair in pairs {
        serde_json::to_writer(&mut writer, pair)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_records(mut writer: impl Write, records: &[QualityRecord]) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
