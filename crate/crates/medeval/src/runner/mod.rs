//! End-to-end command orchestration: load data, drive the endpoint through
//! the bounded batch runner, aggregate, and write reports.
//!
//! Every live run records its raw endpoint responses to
//! `<out>/replay.jsonl`; rerunning with `--replay` regenerates every report
//! byte-for-byte without touching the network. Report files never contain
//! wall-clock or other volatile data.

mod config;

pub use config::{
    config_digest, CommandKind, EvalSection, FilterSection, JudgeSection, MergeSection, RunConfig,
    TranslateSection,
};

use std::collections::BTreeMap;
use std::fs;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bleu::{corpus_bleu, BleuReport, SegmentPair, TokenizeMode};
use crate::client::{Client, CompletionRequest, GenerationRequest, ScoreRequest};
use crate::corpus::{
    bundled_manifest, load_benchmark, split_exemplars, validate_manifest, Benchmark, BenchmarkItem,
    Split,
};
use crate::error::{Error, Result};
use crate::filter::{
    filter, histogram_csv, load_pairs, score_histogram, score_pairs, write_pairs, write_records,
    QualityRecord,
};
use crate::judge::{
    histogram, overall_average, parse_verdict_score, per_task_means, rank_models,
    render_judge_prompt, render_task_table, JudgeVerdict, RankSummary, TaskMean, Weighting,
};
use crate::merge::{merge_models, MergeReport};
use crate::numfmt::format_fixed;
use crate::prompt::{
    builtin_templates, derive_seed, load_template_file, make_variants, render, RenderedPrompt,
    TemplateSpec,
};
use crate::scoring::{
    accuracy, aggregate_average, extract_label, loglik_argmax, majority_vote,
    render_accuracy_table, AccuracyReport, ChoiceScore, Mode, Normalization, Prediction,
    SampleRecord,
};

/// CLI-level knobs common to every command.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Answer from this recorded log instead of the network.
    pub replay: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgeAverages {
    pub unweighted: f64,
    pub count_weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgeSummary {
    pub verdict_count: usize,
    pub parse_failures: usize,
    pub task_means: BTreeMap<String, Vec<TaskMean>>,
    pub averages: BTreeMap<String, JudgeAverages>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranks: Option<RankSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterSummary {
    pub scored: usize,
    pub retained: usize,
    pub removed: usize,
    pub quarantined: usize,
    pub threshold: u8,
    pub histogram: [u64; 11],
}

/// What one command produced. Serialized as `report.json`; the wall clock is
/// printed, never persisted, so replayed reports stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config_digest: String,
    pub request_count: u64,
    pub failure_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<Vec<AccuracyReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<BleuReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merge: Option<MergeReport>,
    #[serde(skip)]
    pub wall_clock_ms: u128,
}

impl RunReport {
    fn new(command: CommandKind, digest: String) -> RunReport {
        RunReport {
            command: command.as_str().to_string(),
            config_digest: digest,
            request_count: 0,
            failure_count: 0,
            accuracy: None,
            average: None,
            bleu: None,
            judge: None,
            filter: None,
            merge: None,
            wall_clock_ms: 0,
        }
    }
}

/// Run one command to completion, writing artifacts under `options.out_dir`.
pub fn execute(command: CommandKind, cfg: &RunConfig, options: &RunOptions) -> Result<RunReport> {
    let started = Instant::now();
    fs::create_dir_all(&options.out_dir)?;

    let mut report = match command {
        CommandKind::Eval => cmd_eval(cfg, options)?,
        CommandKind::Translate => cmd_translate(cfg, options)?,
        CommandKind::Judge => cmd_judge(cfg, options)?,
        CommandKind::Filter => cmd_filter(cfg, options)?,
        CommandKind::Merge => cmd_merge(cfg, options)?,
    };
    report.wall_clock_ms = started.elapsed().as_millis();
    write_string(
        &options.out_dir.join("report.json"),
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&report).expect("report serializes")
        ),
    )?;
    Ok(report)
}

fn build_client(cfg: &RunConfig, options: &RunOptions) -> Result<Client> {
    let mut endpoint = cfg.endpoint()?;
    if let Some(parallelism) = options.parallelism {
        endpoint.parallelism = parallelism;
    }
    match &options.replay {
        Some(path) => Client::over_replay(endpoint, path),
        None => {
            let client = Client::over_http(endpoint)?;
            client.with_recorder(&options.out_dir.join("replay.jsonl"))
        }
    }
}

fn resolve_template(name: &str) -> Result<TemplateSpec> {
    if name.ends_with(".tmpl") || name.contains('/') || name.contains('\\') {
        load_template_file(Path::new(name))
    } else {
        builtin_templates().get(name).cloned()
    }
}

/// Seed resolution: the CLI flag wins, then the section; randomized runs
/// must pin one explicitly.
fn resolve_seed(section_seed: Option<u64>, options: &RunOptions, randomized: bool) -> Result<u64> {
    match options.seed.or(section_seed) {
        Some(seed) => Ok(seed),
        None if randomized => Err(Error::Config(
            "sampling or permutation is enabled; set a seed in the config or with --seed".into(),
        )),
        None => Ok(0),
    }
}

/// Per-slot failures are isolated, but a batch where every slot failed
/// means the endpoint (or replay log) is unusable; surface that instead of
/// reporting an all-abstain result.
fn all_failed_guard<R>(what: &str, results: &[crate::error::Result<R>]) -> Result<()> {
    let all_endpoint_failures = !results.is_empty()
        && results
            .iter()
            .all(|r| matches!(r, Err(e) if e.exit_code() == 2));
    if all_endpoint_failures {
        let first = results[0].as_ref().err().expect("checked all err");
        return Err(Error::Endpoint(format!(
            "all {} {what} requests failed; first error: {first}",
            results.len()
        )));
    }
    Ok(())
}

fn write_string(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut writer, row)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

type StreamKey = (Benchmark, Option<String>, Split);

fn group_indices(items: &[BenchmarkItem]) -> BTreeMap<StreamKey, Vec<usize>> {
    let mut groups: BTreeMap<StreamKey, Vec<usize>> = BTreeMap::new();
    for (idx, item) in items.iter().enumerate() {
        groups
            .entry((item.benchmark, item.subset.clone(), item.split))
            .or_default()
            .push(idx);
    }
    groups
}

fn check_manifests(items: &[BenchmarkItem]) -> Result<()> {
    for ((benchmark, subset, split), indices) in group_indices(items) {
        let manifest = bundled_manifest(benchmark, subset.as_deref(), split).ok_or_else(|| {
            Error::Config(format!(
                "no bundled manifest for {benchmark}/{}/{split}",
                subset.as_deref().unwrap_or("-")
            ))
        })?;
        let group: Vec<BenchmarkItem> = indices.iter().map(|&i| items[i].clone()).collect();
        let result = validate_manifest(&group, &manifest);
        if !result.passed() {
            return Err(Error::Data(format!(
                "manifest check failed for {benchmark}/{}/{split}:\n{result}",
                subset.as_deref().unwrap_or("-")
            )));
        }
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, options: &RunOptions) -> Result<RunReport> {
    let section = cfg
        .eval
        .as_ref()
        .ok_or_else(|| Error::Config("config needs an [eval] section".into()))?;
    let randomized = section.temperature > 0.0 || section.permute || section.ensemble > 1;
    let seed = resolve_seed(section.seed, options, randomized)?;
    let digest = config_digest(CommandKind::Eval, cfg, seed);
    let mut report = RunReport::new(CommandKind::Eval, digest);

    let format = Benchmark::parse(&section.format)?;
    if !format.has_choices() {
        return Err(Error::Config(format!(
            "eval runs multiple-choice benchmarks; {format} has no choices"
        )));
    }
    let items = load_benchmark(&section.dataset, format)?;
    if items.is_empty() {
        return Err(Error::Data(format!(
            "no items in {}",
            section.dataset.display()
        )));
    }
    if section.check_manifest {
        check_manifests(&items)?;
    }

    if section.templates.is_empty() {
        return Err(Error::Config("eval needs at least one template".into()));
    }
    let templates: Vec<TemplateSpec> = section
        .templates
        .iter()
        .map(|name| resolve_template(name).map(|t| t.with_k(section.k)))
        .collect::<Result<_>>()?;

    let exemplars: Vec<BenchmarkItem> = if section.k > 0 {
        let dev_path = section.dev_dataset.as_ref().ok_or_else(|| {
            Error::Config("few-shot eval needs dev_dataset for exemplar selection".into())
        })?;
        let dev_items = load_benchmark(dev_path, format)?;
        let (selected, _) = split_exemplars(&dev_items, section.k, seed)?;
        selected
    } else {
        Vec::new()
    };

    let mode = match section.mode.as_str() {
        "generative" => Mode::Generative,
        "loglikelihood" => Mode::Loglikelihood,
        other => return Err(Error::Config(format!("unknown eval mode: {other}"))),
    };
    if mode == Mode::Loglikelihood && (section.ensemble != 1 || section.permute) {
        return Err(Error::Config(
            "ensembling and permutation apply to generative mode only".into(),
        ));
    }

    let client = build_client(cfg, options)?;
    let predictions = match mode {
        Mode::Generative => {
            eval_generative(&client, section, &items, &templates, &exemplars, seed)?
        }
        Mode::Loglikelihood => {
            eval_loglikelihood(&client, section, &items, &templates[0], &exemplars)?
        }
    };

    let mut reports = Vec::new();
    for (_, indices) in group_indices(&items) {
        let group_items: Vec<BenchmarkItem> = indices.iter().map(|&i| items[i].clone()).collect();
        let group_preds: Vec<Prediction> =
            indices.iter().map(|&i| predictions[i].clone()).collect();
        reports.push(accuracy(&group_preds, &group_items)?);
    }
    let average = aggregate_average(&reports)?;

    write_jsonl(&options.out_dir.join("predictions.jsonl"), &predictions)?;
    let model_name = cfg
        .endpoint
        .as_ref()
        .map(|e| e.model_name.clone())
        .unwrap_or_default();
    write_string(
        &options.out_dir.join("table.txt"),
        &render_accuracy_table(&model_name, &reports),
    )?;

    report.request_count = client.request_count();
    report.failure_count = client.failure_count();
    report.accuracy = Some(reports);
    report.average = Some(average);
    Ok(report)
}

fn eval_generative(
    client: &Client,
    section: &EvalSection,
    items: &[BenchmarkItem],
    templates: &[TemplateSpec],
    exemplars: &[BenchmarkItem],
    seed: u64,
) -> Result<Vec<Prediction>> {
    let template_refs: Vec<&TemplateSpec> = templates.iter().collect();
    let mut slots: Vec<(usize, RenderedPrompt, u64)> = Vec::new();
    for (item_idx, item) in items.iter().enumerate() {
        let variants = make_variants(
            item,
            &template_refs,
            exemplars,
            section.permute,
            section.ensemble,
            seed,
        )?;
        for (variant_idx, variant) in variants.into_iter().enumerate() {
            let request_seed = derive_seed(seed, &format!("gen:{}", item.id), variant_idx as u64);
            slots.push((item_idx, variant, request_seed));
        }
    }

    let results = if section.single_block {
        let requests: Vec<CompletionRequest> = slots
            .iter()
            .map(|(_, variant, request_seed)| {
                let mut request = CompletionRequest::new(variant.flatten());
                request.temperature = section.temperature;
                request.top_p = section.top_p;
                request.max_tokens = section.max_tokens;
                request.seed = Some(*request_seed);
                request
            })
            .collect();
        client.run_batch(&requests, |r| client.complete(r))
    } else {
        let requests: Vec<GenerationRequest> = slots
            .iter()
            .map(|(_, variant, request_seed)| {
                let mut request = GenerationRequest::new(variant.messages.clone());
                request.temperature = section.temperature;
                request.top_p = section.top_p;
                request.max_tokens = section.max_tokens;
                request.seed = Some(*request_seed);
                request
            })
            .collect();
        client.generate_batch(&requests)
    };
    all_failed_guard("generation", &results)?;
    let mut samples_per_item: Vec<Vec<SampleRecord>> = vec![Vec::new(); items.len()];
    for ((item_idx, variant, _), result) in slots.iter().zip(results) {
        let record = match result {
            Ok(generation) => {
                let text = generation.samples[0].text.clone();
                let rendered = extract_label(&text, &variant.rendered_labels());
                let extracted = rendered
                    .and_then(|r| variant.original_label(&r))
                    .map(str::to_string);
                SampleRecord {
                    raw_text: text,
                    extracted,
                }
            }
            Err(e) => SampleRecord {
                raw_text: format!("<request failed: {e}>"),
                extracted: None,
            },
        };
        samples_per_item[*item_idx].push(record);
    }

    Ok(items
        .iter()
        .zip(samples_per_item)
        .map(|(item, samples)| {
            let vote = majority_vote(samples.iter().map(|s| s.extracted.as_deref()));
            Prediction {
                item_id: item.id.clone(),
                mode: Mode::Generative,
                predicted_label: vote.winner.clone(),
                samples,
                choice_scores: Vec::new(),
                vote: Some(vote),
            }
        })
        .collect())
}

fn eval_loglikelihood(
    client: &Client,
    section: &EvalSection,
    items: &[BenchmarkItem],
    template: &TemplateSpec,
    exemplars: &[BenchmarkItem],
) -> Result<Vec<Prediction>> {
    let normalization = Normalization::parse(&section.normalization)?;
    let mut requests = Vec::new();
    let mut slots: Vec<(usize, String, String)> = Vec::new();
    let mut label_maps: Vec<BTreeMap<String, String>> = Vec::with_capacity(items.len());
    for (item_idx, item) in items.iter().enumerate() {
        let prompt = render(item, template, exemplars)?;
        let flat = prompt.flatten();
        for (rendered, original) in &prompt.label_map {
            let text = item
                .choices
                .iter()
                .find(|c| &c.label == original)
                .map(|c| c.text.as_str())
                .unwrap_or(original);
            requests.push(ScoreRequest {
                prompt: flat.clone(),
                continuation: format!(" {text}"),
            });
            slots.push((item_idx, rendered.clone(), original.clone()));
        }
        label_maps.push(prompt.label_map);
    }

    let results = client.score_batch(&requests);
    all_failed_guard("scoring", &results)?;
    let mut scores_per_item: Vec<Vec<(String, Option<ChoiceScore>)>> =
        vec![Vec::new(); items.len()];
    for ((item_idx, rendered, _), result) in slots.iter().zip(results) {
        let score = result.ok().map(|s| ChoiceScore {
            label: rendered.clone(),
            sum_logprob: s.sum_logprob,
            token_count: s.token_count,
            byte_count: s.byte_count,
        });
        scores_per_item[*item_idx].push((rendered.clone(), score));
    }

    Ok(items
        .iter()
        .zip(scores_per_item)
        .zip(label_maps)
        .map(|((item, scored), label_map)| {
            let complete: Option<Vec<ChoiceScore>> =
                scored.iter().map(|(_, score)| score.clone()).collect();
            let labels: Vec<String> = label_map.keys().cloned().collect();
            let predicted = complete.as_ref().and_then(|scores| {
                loglik_argmax(scores, &labels, normalization)
                    .ok()
                    .and_then(|rendered| label_map.get(&rendered).cloned())
            });
            Prediction {
                item_id: item.id.clone(),
                mode: Mode::Loglikelihood,
                predicted_label: predicted,
                samples: Vec::new(),
                choice_scores: complete.unwrap_or_default(),
                vote: None,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HypothesisRecord {
    item_id: String,
    hypothesis: String,
    reference: String,
}

fn cmd_translate(cfg: &RunConfig, options: &RunOptions) -> Result<RunReport> {
    let section = cfg
        .translate
        .as_ref()
        .ok_or_else(|| Error::Config("config needs a [translate] section".into()))?;
    let randomized = section.temperature > 0.0;
    let seed = resolve_seed(section.seed, options, randomized)?;
    let digest = config_digest(CommandKind::Translate, cfg, seed);
    let mut report = RunReport::new(CommandKind::Translate, digest);

    let items = load_benchmark(&section.dataset, Benchmark::Translation)?;
    if items.is_empty() {
        return Err(Error::Data(format!(
            "no items in {}",
            section.dataset.display()
        )));
    }
    let template = resolve_template(&section.template)?;
    let mode = TokenizeMode::parse(&section.tokenize)?;

    let client = build_client(cfg, options)?;
    let mut requests = Vec::with_capacity(items.len());
    for item in &items {
        let prompt = render(item, &template, &[])?;
        let mut request = GenerationRequest::new(prompt.messages);
        request.temperature = section.temperature;
        request.top_p = section.top_p;
        request.max_tokens = section.max_tokens;
        if randomized {
            request.seed = Some(derive_seed(seed, &format!("tr:{}", item.id), 0));
        }
        requests.push(request);
    }
    let results = client.generate_batch(&requests);
    all_failed_guard("translation", &results)?;

    let mut hypotheses = Vec::with_capacity(items.len());
    let mut pairs = Vec::with_capacity(items.len());
    for (item, result) in items.iter().zip(results) {
        let hypothesis = match result {
            Ok(generation) => generation.samples[0].text.clone(),
            Err(_) => String::new(),
        };
        let reference = item.reference.clone().unwrap_or_default();
        pairs.push(SegmentPair {
            hypothesis: hypothesis.clone(),
            reference: reference.clone(),
        });
        hypotheses.push(HypothesisRecord {
            item_id: item.id.clone(),
            hypothesis,
            reference,
        });
    }
    let bleu = corpus_bleu(&pairs, mode)?;

    write_jsonl(&options.out_dir.join("hypotheses.jsonl"), &hypotheses)?;
    let model_name = cfg
        .endpoint
        .as_ref()
        .map(|e| e.model_name.clone())
        .unwrap_or_default();
    write_string(
        &options.out_dir.join("table.txt"),
        &format!(
            "Model | BLEU | Precisions (p1/p2/p3/p4) | BP | Ratio\n{model_name} | {}\n",
            bleu.table_row()
        ),
    )?;

    report.request_count = client.request_count();
    report.failure_count = client.failure_count();
    report.bleu = Some(bleu);
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnswerRecord {
    item_id: String,
    answer: String,
}

fn load_answers(path: &Path) -> Result<Vec<AnswerRecord>> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut answers = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let record: AnswerRecord = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            message: format!("invalid json: {e}"),
        })?;
        answers.push(record);
    }
    Ok(answers)
}

fn cmd_judge(cfg: &RunConfig, options: &RunOptions) -> Result<RunReport> {
    let section = cfg
        .judge
        .as_ref()
        .ok_or_else(|| Error::Config("config needs a [judge] section".into()))?;
    let seed = resolve_seed(section.seed, options, false)?;
    let digest = config_digest(CommandKind::Judge, cfg, seed);
    let mut report = RunReport::new(CommandKind::Judge, digest);

    if section.answers.is_empty() {
        return Err(Error::Config(
            "judge needs at least one answers file".into(),
        ));
    }
    let items = load_benchmark(&section.dataset, Benchmark::EhrTask)?;
    let by_id: BTreeMap<&str, &BenchmarkItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let rubric = resolve_template(&section.rubric)?;

    let client = build_client(cfg, options)?;
    let mut all_verdicts: Vec<JudgeVerdict> = Vec::new();
    let mut parse_failures = 0usize;
    let mut per_model_verdicts: BTreeMap<String, Vec<JudgeVerdict>> = BTreeMap::new();

    for (model_name, answers_path) in &section.answers {
        let answers = load_answers(answers_path)?;
        let mut requests = Vec::with_capacity(answers.len());
        let mut slot_items = Vec::with_capacity(answers.len());
        for answer in &answers {
            let item = by_id.get(answer.item_id.as_str()).ok_or_else(|| {
                Error::Data(format!(
                    "answers file {} references unknown item {}",
                    answers_path.display(),
                    answer.item_id
                ))
            })?;
            let prompt = render_judge_prompt(item, &answer.answer, &rubric)?;
            let mut request = GenerationRequest::new(prompt.messages);
            request.max_tokens = section.max_tokens;
            requests.push(request);
            slot_items.push(*item);
        }

        let results = client.generate_batch(&requests);
        all_failed_guard("judge", &results)?;
        let verdicts = per_model_verdicts.entry(model_name.clone()).or_default();
        for (item, result) in slot_items.iter().zip(results) {
            let text = match result {
                Ok(generation) => generation.samples[0].text.clone(),
                Err(_) => {
                    parse_failures += 1;
                    continue;
                }
            };
            match parse_verdict_score(&text) {
                Ok(score) => {
                    let verdict = JudgeVerdict {
                        item_id: item.id.clone(),
                        task: item.subset.clone().unwrap_or_default(),
                        model_name: model_name.clone(),
                        score,
                        rationale: text,
                    };
                    verdicts.push(verdict.clone());
                    all_verdicts.push(verdict);
                }
                Err(_) => parse_failures += 1,
            }
        }
    }

    let mut task_means = BTreeMap::new();
    let mut averages = BTreeMap::new();
    for (model, verdicts) in &per_model_verdicts {
        let means = per_task_means(verdicts)?;
        if !means.is_empty() {
            averages.insert(
                model.clone(),
                JudgeAverages {
                    unweighted: overall_average(&means, Weighting::Unweighted)?,
                    count_weighted: overall_average(&means, Weighting::CountWeighted)?,
                },
            );
        }
        task_means.insert(model.clone(), means);

        let hist = histogram(verdicts);
        write_string(
            &options
                .out_dir
                .join(format!("hist_{}.csv", sanitize(model))),
            &hist.to_csv(),
        )?;
    }

    // Rank chart over items every model scored.
    let ranks = if per_model_verdicts.len() >= 2 {
        let mut per_item: BTreeMap<String, BTreeMap<String, u8>> = BTreeMap::new();
        for verdict in &all_verdicts {
            per_item
                .entry(verdict.item_id.clone())
                .or_default()
                .insert(verdict.model_name.clone(), verdict.score);
        }
        let model_count = per_model_verdicts.len();
        per_item.retain(|_, scores| scores.len() == model_count);
        if per_item.is_empty() {
            None
        } else {
            let summary = rank_models(&per_item)?;
            write_string(&options.out_dir.join("ranks.csv"), &summary.to_csv())?;
            Some(summary)
        }
    } else {
        None
    };

    write_jsonl(&options.out_dir.join("verdicts.jsonl"), &all_verdicts)?;
    write_string(
        &options.out_dir.join("task_table.txt"),
        &render_task_table(&task_means),
    )?;

    report.request_count = client.request_count();
    report.failure_count = client.failure_count();
    report.judge = Some(JudgeSummary {
        verdict_count: all_verdicts.len(),
        parse_failures,
        task_means,
        averages,
        ranks,
    });
    Ok(report)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct QuarantineRecord {
    pair_id: String,
    error: String,
}

fn cmd_filter(cfg: &RunConfig, options: &RunOptions) -> Result<RunReport> {
    let section = cfg
        .filter
        .as_ref()
        .ok_or_else(|| Error::Config("config needs a [filter] section".into()))?;
    if section.threshold > 10 {
        return Err(Error::Config(format!(
            "threshold must be 0..=10, got {}",
            section.threshold
        )));
    }
    let seed = resolve_seed(section.seed, options, false)?;
    let digest = config_digest(CommandKind::Filter, cfg, seed);
    let mut report = RunReport::new(CommandKind::Filter, digest);

    let pairs = load_pairs(&section.pairs)?;
    let rubric = resolve_template(&section.rubric)?;
    let client = build_client(cfg, options)?;

    let filter_config = crate::filter::FilterConfig {
        threshold: section.threshold,
        rubric_template: section.rubric.clone(),
        max_tokens: section.max_tokens,
    };
    let results = score_pairs(&client, &rubric, &pairs, &filter_config);
    all_failed_guard("scorer", &results)?;

    let mut records: Vec<QualityRecord> = Vec::new();
    let mut scored_pairs = Vec::new();
    let mut quarantine: Vec<QuarantineRecord> = Vec::new();
    for (pair, result) in pairs.iter().zip(results) {
        match result {
            Ok(record) => {
                records.push(record);
                scored_pairs.push(pair.clone());
            }
            Err(e) => quarantine.push(QuarantineRecord {
                pair_id: pair.id.clone(),
                error: e.to_string(),
            }),
        }
    }

    let (retained_records, removed_records) = filter(&records, section.threshold);
    let retained_ids: std::collections::BTreeSet<&str> = retained_records
        .iter()
        .map(|r| r.pair_id.as_str())
        .collect();
    let (retained_pairs, removed_pairs): (Vec<_>, Vec<_>) = scored_pairs
        .iter()
        .cloned()
        .partition(|p| retained_ids.contains(p.id.as_str()));

    let bins = score_histogram(&records);
    {
        let mut w = BufWriter::new(File::create(options.out_dir.join("retained.jsonl"))?);
        write_pairs(&mut w, &retained_pairs)?;
        let mut w = BufWriter::new(File::create(options.out_dir.join("removed.jsonl"))?);
        write_pairs(&mut w, &removed_pairs)?;
        let mut w = BufWriter::new(File::create(options.out_dir.join("records.jsonl"))?);
        let mut all_records = retained_records.clone();
        all_records.extend(removed_records.clone());
        all_records.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        write_records(&mut w, &all_records)?;
    }
    write_jsonl(&options.out_dir.join("quarantine.jsonl"), &quarantine)?;
    write_string(
        &options.out_dir.join("histogram.csv"),
        &histogram_csv(&bins),
    )?;

    report.request_count = client.request_count();
    report.failure_count = client.failure_count();
    report.filter = Some(FilterSummary {
        scored: records.len(),
        retained: retained_records.len(),
        removed: removed_records.len(),
        quarantined: quarantine.len(),
        threshold: section.threshold,
        histogram: bins,
    });
    Ok(report)
}

fn cmd_merge(cfg: &RunConfig, options: &RunOptions) -> Result<RunReport> {
    let section = cfg
        .merge
        .as_ref()
        .ok_or_else(|| Error::Config("config needs a [merge] section".into()))?;
    let seed = resolve_seed(None, options, false)?;
    let digest = config_digest(CommandKind::Merge, cfg, seed);
    let mut report = RunReport::new(CommandKind::Merge, digest);

    let merge_report = merge_models(&section.to_merge_config())?;
    let _ = &options.out_dir;
    report.merge = Some(merge_report);
    Ok(report)
}

/// One console line summarizing a finished run.
pub fn summary_line(report: &RunReport) -> String {
    let mut parts = vec![format!(
        "{}: {} request(s), {} failure(s), {} ms",
        report.command, report.request_count, report.failure_count, report.wall_clock_ms
    )];
    if let Some(avg) = report.average {
        parts.push(format!("average accuracy {}", format_fixed(avg, 1)));
    }
    if let Some(bleu) = &report.bleu {
        parts.push(format!("BLEU {}", format_fixed(bleu.bleu, 2)));
    }
    if let Some(judge) = &report.judge {
        parts.push(format!("{} verdict(s)", judge.verdict_count));
    }
    if let Some(filter) = &report.filter {
        parts.push(format!("retained {} of {}", filter.retained, filter.scored));
    }
    if let Some(merge) = &report.merge {
        parts.push(format!("{} tensor(s) merged", merge.tensor_count));
    }
    parts.join("; ")
}
