//! Turning model output into predictions and accuracy numbers.
//!
//! Generative outputs go through [`extract_label`] and self-consistency
//! [`majority_vote`]; log-likelihood runs go through [`loglik_argmax`].
//! Abstentions stay in the denominator as incorrect so accuracy is always
//! over the full test set.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Benchmark, BenchmarkItem};
use crate::error::{Error, Result};
use crate::numfmt::format_fixed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Generative,
    Loglikelihood,
}

/// Extract the answered label from generative model output.
///
/// Rules are applied in order, case-insensitively:
/// 1. the last `Answer: <label>` marker whose token is a permitted label;
/// 2. a permitted label alone on a line (single-letter label sets);
/// 3. a label followed by `.` or `)` at the start of the text;
/// 4. for word labels such as yes/no/maybe, the last whole-word occurrence
///    anywhere.
///
/// Returns the canonical label from `labels`, or `None` to abstain.
pub fn extract_label(text: &str, labels: &[String]) -> Option<String> {
    static DIRECTIVE: OnceLock<Regex> = OnceLock::new();
    let directive = DIRECTIVE
        .get_or_init(|| Regex::new(r"(?i)\banswer\s*:\s*\(?([a-z0-9]+)").expect("static regex"));

    let canonical = |token: &str| -> Option<String> {
        labels
            .iter()
            .find(|l| l.eq_ignore_ascii_case(token))
            .cloned()
    };

    // Rule 1: last directive occurrence naming a permitted label.
    if let Some(label) = directive
        .captures_iter(text)
        .filter_map(|c| canonical(&c[1]))
        .last()
    {
        return Some(label);
    }

    let single_letters = labels.iter().all(|l| l.len() == 1);
    if single_letters {
        // Rule 2: a lone label on its own line (last occurrence).
        if let Some(label) = text
            .lines()
            .filter_map(|line| canonical(line.trim()))
            .next_back()
        {
            return Some(label);
        }
        // Rule 3: "B." or "B)" at the start of the text.
        let trimmed = text.trim_start();
        let mut chars = trimmed.chars();
        if let (Some(first), Some(second)) = (chars.next(), chars.next()) {
            if second == '.' || second == ')' {
                if let Some(label) = canonical(&first.to_string()) {
                    return Some(label);
                }
            }
        }
        None
    } else {
        // Rule 4: last whole-word occurrence of a word label.
        let mut last: Option<(usize, String)> = None;
        for label in labels {
            let pattern = format!(r"(?i)\b{}\b", regex::escape(label));
            let re = Regex::new(&pattern).expect("escaped label regex");
            if let Some(m) = re.find_iter(text).last() {
                if last.as_ref().is_none_or(|(pos, _)| m.start() > *pos) {
                    last = Some((m.start(), label.clone()));
                }
            }
        }
        last.map(|(_, label)| label)
    }
}

/// Vote counts over extracted labels; abstains never vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub counts: BTreeMap<String, usize>,
    /// `None` when every sample abstained.
    pub winner: Option<String>,
    pub tie_broken: bool,
}

/// Majority decision over sampled answers.
///
/// Ties go to the lexicographically smallest label, which makes the result
/// invariant under any reordering of the samples.
pub fn majority_vote<'a, I>(extracted: I) -> VoteTally
where
    I: IntoIterator<Item = Option<&'a str>>,
{
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for label in extracted.into_iter().flatten() {
        *counts.entry(label.to_string()).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    let winners: Vec<&String> = counts
        .iter()
        .filter(|(_, &c)| c == best)
        .map(|(l, _)| l)
        .collect();
    let winner = winners.first().map(|l| (*l).clone());
    VoteTally {
        tie_broken: winners.len() > 1,
        counts,
        winner,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    PerToken,
    PerByte,
}

impl Normalization {
    pub fn parse(s: &str) -> Result<Normalization> {
        match s {
            "raw" => Ok(Normalization::Raw),
            "per_token" => Ok(Normalization::PerToken),
            "per_byte" => Ok(Normalization::PerByte),
            other => Err(Error::Config(format!("unknown normalization: {other}"))),
        }
    }
}

/// Log-probability of one choice as a continuation of the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceScore {
    pub label: String,
    pub sum_logprob: f64,
    pub token_count: usize,
    pub byte_count: usize,
}

/// Pick the highest-scoring label, optionally length-normalized.
///
/// Requires exactly one score per permitted label; ties break to the
/// lexicographically smallest label.
pub fn loglik_argmax(
    scores: &[ChoiceScore],
    labels: &[String],
    normalization: Normalization,
) -> Result<String> {
    let mut seen = BTreeSet::new();
    for score in scores {
        if !labels.contains(&score.label) {
            return Err(Error::Data(format!(
                "unexpected label {:?} among choice scores",
                score.label
            )));
        }
        if !seen.insert(score.label.as_str()) {
            return Err(Error::Data(format!(
                "duplicate label {:?} among choice scores",
                score.label
            )));
        }
    }
    if seen.len() != labels.len() {
        let missing: Vec<&str> = labels
            .iter()
            .map(String::as_str)
            .filter(|l| !seen.contains(l))
            .collect();
        return Err(Error::Data(format!(
            "missing choice scores for labels {missing:?}"
        )));
    }

    let mut ranked: Vec<&ChoiceScore> = scores.iter().collect();
    ranked.sort_by(|a, b| a.label.cmp(&b.label));
    let mut best: Option<(&str, f64)> = None;
    for score in ranked {
        let divisor = match normalization {
            Normalization::Raw => 1.0,
            Normalization::PerToken => score.token_count as f64,
            Normalization::PerByte => score.byte_count as f64,
        };
        if divisor == 0.0 {
            return Err(Error::Data(format!(
                "zero-length continuation for label {:?}",
                score.label
            )));
        }
        let value = score.sum_logprob / divisor;
        if best.is_none_or(|(_, b)| value > b) {
            best = Some((&score.label, value));
        }
    }
    Ok(best.expect("labels are non-empty").0.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub raw_text: String,
    /// Extracted label mapped back to the item's original label space.
    pub extracted: Option<String>,
}

/// Per-item outcome of either scoring mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub item_id: String,
    pub mode: Mode,
    /// Original-space label, or `None` for an abstention.
    pub predicted_label: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<SampleRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choice_scores: Vec<ChoiceScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote: Option<VoteTally>,
}

/// Accuracy with the standard error of a proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub benchmark: Benchmark,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    pub n: usize,
    pub correct: usize,
    pub p: f64,
    pub stderr: f64,
    pub abstain_count: usize,
}

impl AccuracyReport {
    pub fn from_counts(
        benchmark: Benchmark,
        subset: Option<String>,
        n: usize,
        correct: usize,
        abstain_count: usize,
    ) -> AccuracyReport {
        let p = if n == 0 {
            0.0
        } else {
            correct as f64 / n as f64
        };
        let stderr = if n == 0 {
            0.0
        } else {
            (p * (1.0 - p) / n as f64).sqrt()
        };
        AccuracyReport {
            benchmark,
            subset,
            n,
            correct,
            p,
            stderr,
            abstain_count,
        }
    }

    /// Percent cell in the table style, e.g. "64.5 ±1.3".
    pub fn display_cell(&self) -> String {
        format!(
            "{} ±{}",
            format_fixed(self.p * 100.0, 1),
            format_fixed(self.stderr * 100.0, 1)
        )
    }
}

/// Score predictions against their items.
///
/// Expects exactly one prediction per item (matched by id) and a uniform
/// (benchmark, subset) stream; abstentions count as incorrect.
pub fn accuracy(predictions: &[Prediction], items: &[BenchmarkItem]) -> Result<AccuracyReport> {
    let first = items
        .first()
        .ok_or_else(|| Error::Data("accuracy needs at least one item".into()))?;
    if let Some(item) = items
        .iter()
        .find(|i| i.benchmark != first.benchmark || i.subset != first.subset)
    {
        return Err(Error::Data(format!(
            "mixed streams in accuracy input: {} vs {}",
            first.id, item.id
        )));
    }
    let by_id: BTreeMap<&str, &Prediction> = predictions
        .iter()
        .map(|p| (p.item_id.as_str(), p))
        .collect();
    if by_id.len() != predictions.len() || predictions.len() != items.len() {
        return Err(Error::Data(format!(
            "need exactly one prediction per item: {} predictions for {} items",
            predictions.len(),
            items.len()
        )));
    }
    let mut correct = 0;
    let mut abstain = 0;
    for item in items {
        let prediction = by_id
            .get(item.id.as_str())
            .ok_or_else(|| Error::Data(format!("no prediction for item {}", item.id)))?;
        match &prediction.predicted_label {
            Some(label) if Some(label.as_str()) == item.gold.as_deref() => correct += 1,
            Some(_) => {}
            None => abstain += 1,
        }
    }
    Ok(AccuracyReport::from_counts(
        first.benchmark,
        first.subset.clone(),
        items.len(),
        correct,
        abstain,
    ))
}

/// Unweighted mean of per-benchmark accuracies, in percent.
pub fn aggregate_average(reports: &[AccuracyReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::Data("cannot average zero reports".into()));
    }
    Ok(reports.iter().map(|r| r.p * 100.0).sum::<f64>() / reports.len() as f64)
}

/// Mean of raw percent values (for pre-tabulated rows).
pub fn average_percentages(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("cannot average zero values".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

fn column_key(benchmark: Benchmark, subset: Option<&str>) -> (u8, usize, String) {
    const MMLU_ORDER: [&str; 6] = [
        "clinical_knowledge",
        "medical_genetics",
        "anatomy",
        "professional_medicine",
        "college_biology",
        "college_medicine",
    ];
    match benchmark {
        Benchmark::Mmlu => {
            let idx = subset
                .and_then(|s| MMLU_ORDER.iter().position(|m| *m == s))
                .unwrap_or(MMLU_ORDER.len());
            (0, idx, subset.unwrap_or("").to_string())
        }
        Benchmark::Medqa => (1, 0, String::new()),
        Benchmark::Pubmedqa => (2, 0, String::new()),
        Benchmark::Medmcqa => (3, 0, String::new()),
        other => (4, 0, format!("{other}/{}", subset.unwrap_or(""))),
    }
}

/// Human-readable column name in the accuracy table.
pub fn column_name(benchmark: Benchmark, subset: Option<&str>) -> String {
    match (benchmark, subset) {
        (Benchmark::Mmlu, Some("clinical_knowledge")) => "Clinical KG".into(),
        (Benchmark::Mmlu, Some("medical_genetics")) => "Medical Genetics".into(),
        (Benchmark::Mmlu, Some("anatomy")) => "Anatomy".into(),
        (Benchmark::Mmlu, Some("professional_medicine")) => "Pro Medicine".into(),
        (Benchmark::Mmlu, Some("college_biology")) => "College Biology".into(),
        (Benchmark::Mmlu, Some("college_medicine")) => "College Medicine".into(),
        (Benchmark::Mmlu, Some(other)) => format!("MMLU {other}"),
        (Benchmark::Medqa, _) => "MedQA".into(),
        (Benchmark::Pubmedqa, _) => "PubMedQA".into(),
        (Benchmark::Medmcqa, _) => "MedMCQA".into(),
        (b, Some(s)) => format!("{b} {s}"),
        (b, None) => b.to_string(),
    }
}

/// Render one model row in the benchmark-table layout: the six MMLU subsets,
/// then MedQA, PubMedQA, MedMCQA, then an Avg. column.
pub fn render_accuracy_table(model: &str, reports: &[AccuracyReport]) -> String {
    let mut ordered: Vec<&AccuracyReport> = reports.iter().collect();
    ordered.sort_by_key(|r| column_key(r.benchmark, r.subset.as_deref()));

    let mut headers = vec!["Model".to_string()];
    let mut cells = vec![model.to_string()];
    for report in &ordered {
        headers.push(column_name(report.benchmark, report.subset.as_deref()));
        cells.push(report.display_cell());
    }
    headers.push("Avg.".into());
    cells.push(match aggregate_average(reports) {
        Ok(avg) => format_fixed(avg, 1),
        Err(_) => "-".into(),
    });

    let widths: Vec<usize> = headers
        .iter()
        .zip(&cells)
        .map(|(h, c)| h.chars().count().max(c.chars().count()))
        .collect();
    let line = |row: &[String]| {
        row.iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let sep = widths
        .iter()
        .map(|w| "-".repeat(*w))
        .collect::<Vec<_>>()
        .join("-+-");
    format!("{}\n{}\n{}\n", line(&headers), sep, line(&cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Choice, Split};

    fn letters(n: usize) -> Vec<String> {
        (0..n)
            .map(|i| ((b'A' + i as u8) as char).to_string())
            .collect()
    }

    fn ynm() -> Vec<String> {
        ["yes", "no", "maybe"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn directive_extraction() {
        let labels = letters(4);
        assert_eq!(
            extract_label("…reasoning…\nAnswer: D. Nitrofurantoin", &labels),
            Some("D".into())
        );
        assert_eq!(extract_label("answer: a", &labels), Some("A".into()));
        assert_eq!(
            extract_label("Answer: A … later … Answer: C", &labels),
            Some("C".into()),
            "last occurrence wins"
        );
        // A directive naming a non-label token does not match.
        assert_eq!(extract_label("Answer: Nitrofurantoin", &labels), None);
        assert_eq!(extract_label("Answer: B12 deficiency", &labels), None);
    }

    #[test]
    fn lone_token_and_prefix_rules() {
        let labels = letters(4);
        assert_eq!(extract_label("B", &labels), Some("B".into()));
        assert_eq!(extract_label("thinking...\nC\n", &labels), Some("C".into()));
        assert_eq!(
            extract_label("B. Ceftriaxone fits best.", &labels),
            Some("B".into())
        );
        assert_eq!(extract_label("C) because of X", &labels), Some("C".into()));
        assert_eq!(extract_label("Because B is right.", &labels), None);
        assert_eq!(extract_label("", &labels), None);
    }

    #[test]
    fn word_labels_match_whole_words() {
        let labels = ynm();
        assert_eq!(
            extract_label("Answer: maybe", &labels),
            Some("maybe".into())
        );
        assert_eq!(
            extract_label("The study says yes.", &labels),
            Some("yes".into())
        );
        assert_eq!(
            extract_label("maybe yes, maybe no", &labels),
            Some("no".into()),
            "last whole word wins"
        );
        assert_eq!(extract_label("noisy mayonnaise", &labels), None);
    }

    #[test]
    fn vote_counts_and_lexicographic_ties() {
        let tally = majority_vote([Some("A"), Some("A"), Some("B")]);
        assert_eq!(tally.winner.as_deref(), Some("A"));
        assert_eq!(tally.counts["A"], 2);
        assert_eq!(tally.counts["B"], 1);
        assert!(!tally.tie_broken);

        let tie = majority_vote([Some("B"), Some("A")]);
        assert_eq!(tie.winner.as_deref(), Some("A"));
        assert!(tie.tie_broken);

        let single = majority_vote([Some("C")]);
        assert_eq!(single.winner.as_deref(), Some("C"));

        let abstained = majority_vote([None, None]);
        assert_eq!(abstained.winner, None);
        assert!(abstained.counts.is_empty());

        let mixed = majority_vote([None, Some("B"), None]);
        assert_eq!(mixed.winner.as_deref(), Some("B"));
        assert_eq!(mixed.counts.values().sum::<usize>(), 1);
    }

    fn score(label: &str, lp: f64, tokens: usize, bytes: usize) -> ChoiceScore {
        ChoiceScore {
            label: label.into(),
            sum_logprob: lp,
            token_count: tokens,
            byte_count: bytes,
        }
    }

    #[test]
    fn argmax_modes() {
        let labels = letters(4);
        let scores = vec![
            score("A", -3.0, 1, 1),
            score("B", -2.5, 1, 1),
            score("C", -4.0, 1, 1),
            score("D", -9.9, 1, 1),
        ];
        assert_eq!(
            loglik_argmax(&scores, &labels, Normalization::Raw).unwrap(),
            "B"
        );

        let shifted: Vec<ChoiceScore> = scores
            .iter()
            .map(|s| score(&s.label, s.sum_logprob - 7.3, s.token_count, s.byte_count))
            .collect();
        assert_eq!(
            loglik_argmax(&shifted, &labels, Normalization::Raw).unwrap(),
            "B"
        );

        let labels2 = letters(2);
        let per_token = vec![score("A", -4.0, 2, 10), score("B", -4.5, 3, 10)];
        assert_eq!(
            loglik_argmax(&per_token, &labels2, Normalization::PerToken).unwrap(),
            "B"
        );
        assert_eq!(
            loglik_argmax(&per_token, &labels2, Normalization::Raw).unwrap(),
            "A"
        );
    }

    #[test]
    fn argmax_rejects_duplicate_and_missing() {
        let labels = letters(2);
        let dup = vec![score("A", -1.0, 1, 1), score("A", -2.0, 1, 1)];
        assert!(loglik_argmax(&dup, &labels, Normalization::Raw).is_err());
        let missing = vec![score("A", -1.0, 1, 1)];
        assert!(loglik_argmax(&missing, &labels, Normalization::Raw).is_err());
    }

    #[test]
    fn argmax_tie_breaks_lexicographically() {
        let labels = letters(3);
        let scores = vec![
            score("B", -1.0, 1, 1),
            score("C", -1.0, 1, 1),
            score("A", -5.0, 1, 1),
        ];
        assert_eq!(
            loglik_argmax(&scores, &labels, Normalization::Raw).unwrap(),
            "B"
        );
    }

    fn item(id: &str, gold: &str) -> BenchmarkItem {
        BenchmarkItem {
            id: id.into(),
            benchmark: Benchmark::Medqa,
            subset: None,
            split: Split::Test,
            question: "q".into(),
            context: None,
            choices: letters(4)
                .into_iter()
                .map(|l| Choice {
                    text: format!("text {l}"),
                    label: l,
                })
                .collect(),
            gold: Some(gold.into()),
            explanation: None,
            reference: None,
        }
    }

    fn prediction(id: &str, label: Option<&str>) -> Prediction {
        Prediction {
            item_id: id.into(),
            mode: Mode::Generative,
            predicted_label: label.map(String::from),
            samples: Vec::new(),
            choice_scores: Vec::new(),
            vote: None,
        }
    }

    #[test]
    fn accuracy_counts_abstain_as_incorrect() {
        let items: Vec<BenchmarkItem> = vec![
            item("1", "A"),
            item("2", "B"),
            item("3", "C"),
            item("4", "D"),
        ];
        let preds = vec![
            prediction("1", Some("A")),
            prediction("2", Some("C")),
            prediction("3", None),
            prediction("4", Some("D")),
        ];
        let report = accuracy(&preds, &items).unwrap();
        assert_eq!(report.n, 4);
        assert_eq!(report.correct, 2);
        assert_eq!(report.abstain_count, 1);
        assert!((report.p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn accuracy_requires_matching_ids() {
        let items = vec![item("1", "A")];
        let preds = vec![prediction("other", Some("A"))];
        assert!(accuracy(&preds, &items).is_err());
    }

    #[test]
    fn stderr_fixtures_match_published_style() {
        let medqa = AccuracyReport::from_counts(Benchmark::Medqa, None, 1273, 821, 0);
        assert!((medqa.p - 0.645).abs() < 5e-4);
        assert_eq!(medqa.display_cell(), "64.5 ±1.3");

        let pubmed = AccuracyReport::from_counts(Benchmark::Pubmedqa, None, 500, 395, 0);
        assert!((pubmed.p - 0.79).abs() < 1e-12);
        assert_eq!(pubmed.display_cell(), "79.0 ±1.8");

        let perfect = AccuracyReport::from_counts(Benchmark::Medqa, None, 10, 10, 0);
        assert_eq!(perfect.stderr, 0.0);
        assert_eq!(perfect.display_cell(), "100.0 ±0.0");
    }

    #[test]
    fn average_of_single_report_is_itself() {
        let report = AccuracyReport::from_counts(Benchmark::Medqa, None, 100, 50, 0);
        let avg = aggregate_average(std::slice::from_ref(&report)).unwrap();
        assert!((avg - 50.0).abs() < 1e-12);
    }

    #[test]
    fn table_renders_in_canonical_order() {
        let reports = vec![
            AccuracyReport::from_counts(Benchmark::Medqa, None, 10, 5, 0),
            AccuracyReport::from_counts(
                Benchmark::Mmlu,
                Some("clinical_knowledge".into()),
                10,
                8,
                0,
            ),
            AccuracyReport::from_counts(Benchmark::Pubmedqa, None, 10, 9, 0),
        ];
        let table = render_accuracy_table("demo", &reports);
        let first_line = table.lines().next().unwrap();
        let ck = first_line.find("Clinical KG").unwrap();
        let medqa = first_line.find("MedQA").unwrap();
        let pubmed = first_line.find("PubMedQA").unwrap();
        assert!(ck < medqa && medqa < pubmed, "{first_line}");
        assert!(first_line.trim_end().ends_with("Avg."));
    }
}
