//! LLM-as-judge scoring of long-form answers over the 18 EHR task
//! categories, with per-task means, rank distributions, and histograms.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::BenchmarkItem;
use crate::error::{Error, Result};
use crate::numfmt::format_fixed;
use crate::prompt::{fill, Message, RenderedPrompt, TemplateSpec};

/// The 18 EHR task categories with their question counts.
pub const EHR_TASKS: [(&str, usize); 18] = [
    ("Named Entity Recognition", 92),
    ("Temporal Information Extraction", 99),
    ("Paraphrasing", 7),
    ("Natural Language Generation", 86),
    ("Keyword Extraction", 75),
    ("Text Classification", 76),
    ("Relation Extraction", 101),
    ("Question Answering", 87),
    ("Text Summarization", 97),
    ("Abbreviation Expansion", 67),
    ("Clinical Concept Normalization", 78),
    ("Open-ended Question", 20),
    ("Multiple-Choice Question", 10),
    ("Coreference Resolution", 42),
    ("Yes/No Question", 21),
    ("Medical Translate", 29),
    ("Medical Thai Extraction", 63),
    ("Medical ICD Prediction", 76),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeTask {
    pub name: String,
    pub question_count: usize,
}

pub fn task_registry() -> Vec<JudgeTask> {
    EHR_TASKS
        .iter()
        .map(|(name, question_count)| JudgeTask {
            name: (*name).to_string(),
            question_count: *question_count,
        })
        .collect()
}

fn task_index(name: &str) -> Option<usize> {
    EHR_TASKS.iter().position(|(task, _)| *task == name)
}

pub fn is_known_task(name: &str) -> bool {
    task_index(name).is_some()
}

/// One judged answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub item_id: String,
    pub task: String,
    pub model_name: String,
    /// 0..=10.
    pub score: u8,
    pub rationale: String,
}

/// Render the judge prompt for one candidate answer.
///
/// The rubric's pattern may use `{task}`, `{question}`, `{reference}`, and
/// `{answer}`; the reference slot reads "(none provided)" when the item has
/// none. The rubric instructs the judge to reply with a `Score: <0-10>` line.
pub fn render_judge_prompt(
    item: &BenchmarkItem,
    candidate_answer: &str,
    rubric: &TemplateSpec,
) -> Result<RenderedPrompt> {
    if candidate_answer.is_empty() {
        return Err(Error::Config(format!(
            "empty candidate answer for item {}",
            item.id
        )));
    }
    let task = item
        .subset
        .clone()
        .unwrap_or_else(|| item.benchmark.to_string());
    let user = fill(
        &rubric.item_pattern,
        &[
            ("task", task.as_str()),
            ("question", item.question.as_str()),
            (
                "reference",
                item.reference.as_deref().unwrap_or("(none provided)"),
            ),
            ("answer", candidate_answer),
        ],
    );
    let mut messages = Vec::with_capacity(2);
    if !rubric.system_text.is_empty() {
        messages.push(Message::system(rubric.system_text.clone()));
    }
    messages.push(Message::user(user));
    Ok(RenderedPrompt {
        item_id: item.id.clone(),
        template_name: rubric.name.clone(),
        messages,
        label_map: BTreeMap::new(),
        permutation_seed: None,
    })
}

/// Extract the integer after the last `Score:` marker.
///
/// Out-of-range integers are errors, not clamped; a missing marker is an
/// error so upstream callers can quarantine the response.
pub fn parse_verdict_score(text: &str) -> Result<u8> {
    static MARKER: OnceLock<Regex> = OnceLock::new();
    let marker = MARKER
        .get_or_init(|| Regex::new(r"(?i)\bscore\s*:\s*\**\s*(-?\d+)").expect("static regex"));
    let capture = marker
        .captures_iter(text)
        .last()
        .ok_or_else(|| Error::Verdict(format!("no Score: marker in {text:?}")))?;
    let value: i64 = capture[1]
        .parse()
        .map_err(|_| Error::Verdict(format!("unreadable score in {text:?}")))?;
    if !(0..=10).contains(&value) {
        return Err(Error::Verdict(format!(
            "score {value} outside the 0-10 scale"
        )));
    }
    Ok(value as u8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMean {
    pub task: String,
    pub n: usize,
    pub mean: f64,
}

/// Mean score per task, in registry order; tasks with no verdicts are
/// omitted rather than reported as zero.
pub fn per_task_means(verdicts: &[JudgeVerdict]) -> Result<Vec<TaskMean>> {
    let mut sums: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for verdict in verdicts {
        let idx = task_index(&verdict.task)
            .ok_or_else(|| Error::Data(format!("unknown judge task: {:?}", verdict.task)))?;
        let slot = sums.entry(idx).or_insert((0, 0.0));
        slot.0 += 1;
        slot.1 += verdict.score as f64;
    }
    Ok(sums
        .into_iter()
        .map(|(idx, (n, sum))| TaskMean {
            task: EHR_TASKS[idx].0.to_string(),
            n,
            mean: sum / n as f64,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Unweighted,
    CountWeighted,
}

/// Average of the per-task means, either plain or weighted by question
/// counts (the latter equals the global mean over all verdicts).
pub fn overall_average(table: &[TaskMean], weighting: Weighting) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::Data("cannot average an empty task table".into()));
    }
    Ok(match weighting {
        Weighting::Unweighted => table.iter().map(|t| t.mean).sum::<f64>() / table.len() as f64,
        Weighting::CountWeighted => {
            let total: usize = table.iter().map(|t| t.n).sum();
            table.iter().map(|t| t.mean * t.n as f64).sum::<f64>() / total as f64
        }
    })
}

/// Per-model share of items at each competition rank, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub models: Vec<String>,
    /// `percentages[m][r]` is the share of items where model `m` took rank
    /// `r + 1`; each model's row sums to 100.
    pub percentages: Vec<Vec<f64>>,
    pub item_count: usize,
}

impl RankSummary {
    /// CSV with one row per model: `model,rank1,rank2,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for rank in 1..=self.models.len() {
            out.push_str(&format!(",rank{rank}_pct"));
        }
        out.push('\n');
        for (model, row) in self.models.iter().zip(&self.percentages) {
            out.push_str(model);
            for pct in row {
                out.push(',');
                out.push_str(&format_fixed(*pct, 1));
            }
            out.push('\n');
        }
        out
    }
}

/// Rank models per item by score (competition ranking: ties share the best
/// rank and the next rank is skipped), then normalize rank counts to
/// percentages.
pub fn rank_models(
    per_item_scores: &BTreeMap<String, BTreeMap<String, u8>>,
) -> Result<RankSummary> {
    let mut items = per_item_scores.iter();
    let (_, first) = items
        .next()
        .ok_or_else(|| Error::Data("rank_models needs at least one item".into()))?;
    let models: Vec<String> = first.keys().cloned().collect();
    if models.len() < 2 {
        return Err(Error::Data("rank_models needs at least two models".into()));
    }
    for (item, scores) in per_item_scores {
        let set: Vec<&String> = scores.keys().collect();
        if set != models.iter().collect::<Vec<_>>() {
            return Err(Error::Data(format!(
                "item {item} scores models {set:?}, expected {models:?}"
            )));
        }
    }

    let n_items = per_item_scores.len();
    let mut rank_counts = vec![vec![0usize; models.len()]; models.len()];
    for scores in per_item_scores.values() {
        for (m, model) in models.iter().enumerate() {
            let mine = scores[model];
            let better = scores.values().filter(|&&s| s > mine).count();
            rank_counts[m][better] += 1;
        }
    }
    let percentages = rank_counts
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|c| 100.0 * c as f64 / n_items as f64)
                .collect()
        })
        .collect();
    Ok(RankSummary {
        models,
        percentages,
        item_count: n_items,
    })
}

/// Score frequencies for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    /// Counts for scores 0..=10.
    pub bins: [u64; 11],
    pub mean: f64,
}

impl ScoreHistogram {
    pub fn from_bins(bins: [u64; 11]) -> ScoreHistogram {
        let count: u64 = bins.iter().sum();
        let weighted: u64 = bins
            .iter()
            .enumerate()
            .map(|(score, c)| score as u64 * c)
            .sum();
        ScoreHistogram {
            bins,
            mean: if count == 0 {
                0.0
            } else {
                weighted as f64 / count as f64
            },
        }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// CSV rows `score,count` for scores 0..=10.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("score,count\n");
        for (score, count) in self.bins.iter().enumerate() {
            out.push_str(&format!("{score},{count}\n"));
        }
        out
    }
}

pub fn histogram(verdicts: &[JudgeVerdict]) -> ScoreHistogram {
    let mut bins = [0u64; 11];
    for verdict in verdicts {
        bins[verdict.score as usize] += 1;
    }
    ScoreHistogram::from_bins(bins)
}

/// Text table in the per-task layout: one row per task with its question
/// count, one column per model, and both average rows at the bottom.
pub fn render_task_table(means_by_model: &BTreeMap<String, Vec<TaskMean>>) -> String {
    let models: Vec<&String> = means_by_model.keys().collect();
    let mut rows: Vec<Vec<String>> = Vec::new();

    let mut header = vec!["Task (Number of Q/A)".to_string()];
    header.extend(models.iter().map(|m| (*m).clone()));
    rows.push(header);

    for (task, _) in EHR_TASKS.iter() {
        let mut n_seen = None;
        let mut cells = Vec::with_capacity(models.len());
        for model in &models {
            match means_by_model[*model].iter().find(|t| t.task == *task) {
                Some(mean) => {
                    n_seen.get_or_insert(mean.n);
                    cells.push(format_fixed(mean.mean, 2));
                }
                None => cells.push("-".to_string()),
            }
        }
        if let Some(n) = n_seen {
            let mut row = vec![format!("{task} ({n})")];
            row.extend(cells);
            rows.push(row);
        }
    }

    for (label, weighting) in [
        ("Average Score (unweighted)", Weighting::Unweighted),
        ("Average Score (count-weighted)", Weighting::CountWeighted),
    ] {
        let mut row = vec![label.to_string()];
        for model in &models {
            row.push(match overall_average(&means_by_model[*model], weighting) {
                Ok(avg) => format_fixed(avg, 2),
                Err(_) => "-".to_string(),
            });
        }
        rows.push(row);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|col| {
            rows.iter()
                .map(|r| r[col].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ");
        out.push_str(line.trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(
                &widths
                    .iter()
                    .map(|w| "-".repeat(*w))
                    .collect::<Vec<_>>()
                    .join("-+-"),
            );
            out.push('\n');
        }
    }
    out
}
