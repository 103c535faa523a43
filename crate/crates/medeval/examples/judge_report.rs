//! LLM-as-judge scoring of candidate answers across models: per-task mean
//! tables, rank distributions, and score histograms.
//!
//! Run with: `cargo run --example judge_report`

use medeval::client::mock::{chat_completion_body, last_user_content, MockServer};
use medeval::runner::{execute, CommandKind, RunConfig, RunOptions};

fn main() -> medeval::Result<()> {
    let dir = tempfile::tempdir()?;

    // Three EHR tasks with a few items each.
    let dataset = dir.path().join("ehr_tasks.jsonl");
    let items = [
        r#"{"id":"e1","task":"Text Summarization","input":"Summarize the admission note.","reference":"Chest pain, troponin negative, discharged on aspirin."}"#,
        r#"{"id":"e2","task":"Text Summarization","input":"Summarize the discharge note."}"#,
        r#"{"id":"e3","task":"Medical ICD Prediction","input":"Assign codes for hypertensive emergency."}"#,
        r#"{"id":"e4","task":"Keyword Extraction","input":"Extract the medication names."}"#,
    ];
    std::fs::write(&dataset, items.join("\n"))?;

    // Candidate answers carry a planted score marker so the judge mock is
    // deterministic; a real run would put a strong model behind the same
    // endpoint config instead.
    for (model, scores) in [("finetuned", [8, 7, 6, 9]), ("baseline", [5, 6, 8, 4])] {
        let lines: String = ["e1", "e2", "e3", "e4"]
            .iter()
            .zip(scores)
            .map(|(id, s)| {
                format!(r#"{{"item_id":"{id}","answer":"candidate answer [score={s}]"}}"#) + "\n"
            })
            .collect();
        std::fs::write(dir.path().join(format!("{model}.jsonl")), lines)?;
    }

    let server = MockServer::start(|_, _, body| {
        let content = last_user_content(body).unwrap_or_default();
        let score = content
            .split("[score=")
            .nth(1)
            .and_then(|rest| rest.split(']').next())
            .unwrap_or("0");
        (
            200,
            chat_completion_body(&[format!(
                "Score: {score}. Concise, clinically sound, fluent."
            )]),
        )
    })
    .expect("mock server starts");

    let config = RunConfig::parse(&format!(
        r#"
[endpoint]
base_url = "{}"
model_name = "judge-mock"
timeout_ms = 10000
max_retries = 0
backoff_base_ms = 0
parallelism = 4

[judge]
dataset = "{}"

[judge.answers]
finetuned = "{}"
baseline = "{}"
"#,
        server.base_url(),
        dataset.display(),
        dir.path().join("finetuned.jsonl").display(),
        dir.path().join("baseline.jsonl").display(),
    ))?;

    let out = dir.path().join("out");
    let report = execute(
        CommandKind::Judge,
        &config,
        &RunOptions {
            out_dir: out.clone(),
            ..RunOptions::default()
        },
    )?;

    println!("{}", std::fs::read_to_string(out.join("task_table.txt"))?);
    println!(
        "rank distribution:\n{}",
        std::fs::read_to_string(out.join("ranks.csv"))?
    );
    let judge = report.judge.expect("judge summary");
    for (model, averages) in &judge.averages {
        println!(
            "{model}: unweighted {:.2}, count-weighted {:.2}",
            averages.unweighted, averages.count_weighted
        );
    }
    Ok(())
}
