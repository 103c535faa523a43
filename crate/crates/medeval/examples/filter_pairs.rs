//! Instruction-data quality filtering: score pairs 0-10 with a scorer
//! endpoint, drop everything below the threshold, and emit the score
//! histogram.
//!
//! Run with: `cargo run --example filter_pairs`

use medeval::client::mock::{chat_completion_body, last_user_content, MockServer};
use medeval::runner::{execute, CommandKind, RunConfig, RunOptions};

fn main() -> medeval::Result<()> {
    let dir = tempfile::tempdir()?;

    let pairs_path = dir.path().join("pairs.jsonl");
    let pairs = [
        ("p01", "Explain the dosing of amoxicillin in children.", 9),
        ("p02", "Translate 'ventilator' into Thai.", 8),
        ("p03", "List the symptoms of dengue fever.", 7),
        ("p04", "Answer this question.", 3),
        ("p05", "asdf qwerty", 1),
        ("p06", "Summarize the mechanism of metformin.", 10),
    ];
    let lines: String = pairs
        .iter()
        .map(|(id, instruction, score)| {
            format!(
                r#"{{"id":"{id}","instruction":"{instruction} [score={score}]","response":"a full worked response"}}"#
            ) + "\n"
        })
        .collect();
    std::fs::write(&pairs_path, lines)?;

    // Deterministic scorer: reads the planted marker. A real run would point
    // the endpoint at a strong model with the same quality rubric.
    let server = MockServer::start(|_, _, body| {
        let content = last_user_content(body).unwrap_or_default();
        let score = content
            .split("[score=")
            .nth(1)
            .and_then(|rest| rest.split(']').next())
            .unwrap_or("0");
        (
            200,
            chat_completion_body(&[format!("Score: {score}. Rated for helpfulness.")]),
        )
    })
    .expect("mock server starts");

    let config = RunConfig::parse(&format!(
        r#"
[endpoint]
base_url = "{}"
model_name = "scorer-mock"
timeout_ms = 10000
max_retries = 0
backoff_base_ms = 0
parallelism = 3

[filter]
pairs = "{}"
threshold = 7
"#,
        server.base_url(),
        pairs_path.display()
    ))?;

    let out = dir.path().join("out");
    let report = execute(
        CommandKind::Filter,
        &config,
        &RunOptions {
            out_dir: out.clone(),
            ..RunOptions::default()
        },
    )?;

    let summary = report.filter.expect("filter summary");
    println!(
        "scored {} pair(s); kept {} at threshold {}, removed {}, quarantined {}",
        summary.scored, summary.retained, summary.threshold, summary.removed, summary.quarantined
    );
    println!(
        "\nscore histogram:\n{}",
        std::fs::read_to_string(out.join("histogram.csv"))?
    );
    println!(
        "retained pairs:\n{}",
        std::fs::read_to_string(out.join("retained.jsonl"))?
    );
    Ok(())
}
