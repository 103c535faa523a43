//! Full generative evaluation of the bundled 20-item mini benchmark against
//! a deterministic mock endpoint, with self-consistency voting machinery in
//! the loop and a benchmark-table report at the end.
//!
//! Run with: `cargo run --example eval_mock`

use medeval::client::mock::{
    chat_completion_body, last_user_content, mini_benchmark_reply, MockServer,
};
use medeval::runner::{execute, CommandKind, RunConfig, RunOptions};

fn main() -> medeval::Result<()> {
    let dir = tempfile::tempdir()?;
    let dataset = dir.path().join("mini_medqa.jsonl");
    std::fs::write(&dataset, medeval::corpus::mini_benchmark_jsonl())?;

    // A real HTTP server on loopback that answers each mini case with a
    // canned response exercising the different answer formats.
    let server = MockServer::start(|_, _, body| {
        let content = last_user_content(body).unwrap_or_default();
        (200, chat_completion_body(&[mini_benchmark_reply(&content)]))
    })
    .expect("mock server starts");

    let config = RunConfig::parse(&format!(
        r#"
[endpoint]
base_url = "{}"
model_name = "mini-mock"
timeout_ms = 10000
max_retries = 1
backoff_base_ms = 50
parallelism = 4

[eval]
dataset = "{}"
format = "medqa"
templates = ["zero_shot"]
seed = 11
"#,
        server.base_url(),
        dataset.display()
    ))?;

    let out = dir.path().join("out");
    let report = execute(
        CommandKind::Eval,
        &config,
        &RunOptions {
            out_dir: out.clone(),
            ..RunOptions::default()
        },
    )?;

    println!("{}", std::fs::read_to_string(out.join("table.txt"))?);
    let accuracy = &report.accuracy.as_ref().expect("eval accuracy")[0];
    println!(
        "{} of {} correct with {} abstention(s); {} requests, {} ms",
        accuracy.correct,
        accuracy.n,
        accuracy.abstain_count,
        report.request_count,
        report.wall_clock_ms,
    );
    println!(
        "raw responses recorded to {} for offline reruns",
        out.join("replay.jsonl").display()
    );
    Ok(())
}
