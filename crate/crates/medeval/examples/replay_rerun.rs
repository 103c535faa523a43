//! Deterministic replay: record a live run's raw endpoint responses, then
//! regenerate the identical reports offline from the log.
//!
//! Run with: `cargo run --example replay_rerun`

use medeval::client::mock::{
    chat_completion_body, last_user_content, mini_benchmark_reply, MockServer,
};
use medeval::runner::{execute, CommandKind, RunConfig, RunOptions};

fn main() -> medeval::Result<()> {
    let dir = tempfile::tempdir()?;
    let dataset = dir.path().join("mini_medqa.jsonl");
    std::fs::write(&dataset, medeval::corpus::mini_benchmark_jsonl())?;

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
backoff_base_ms = 0
parallelism = 2

[eval]
dataset = "{}"
format = "medqa"
templates = ["zero_shot"]
seed = 11
"#,
        server.base_url(),
        dataset.display()
    ))?;

    // Live run: every final response lands in out_live/replay.jsonl.
    let out_live = dir.path().join("out_live");
    let live = execute(
        CommandKind::Eval,
        &config,
        &RunOptions {
            out_dir: out_live.clone(),
            ..RunOptions::default()
        },
    )?;
    println!(
        "live run: {} request(s), digest {}",
        live.request_count, live.config_digest
    );

    // Kill the endpoint; the replay rerun must not notice.
    drop(server);

    let out_replay = dir.path().join("out_replay");
    let replayed = execute(
        CommandKind::Eval,
        &config,
        &RunOptions {
            out_dir: out_replay.clone(),
            replay: Some(out_live.join("replay.jsonl")),
            ..RunOptions::default()
        },
    )?;
    println!(
        "replay run (endpoint gone): {} request(s), digest {}",
        replayed.request_count, replayed.config_digest
    );

    for file in ["report.json", "predictions.jsonl", "table.txt"] {
        let live_bytes = std::fs::read(out_live.join(file))?;
        let replay_bytes = std::fs::read(out_replay.join(file))?;
        println!(
            "{file}: {} ({} bytes)",
            if live_bytes == replay_bytes {
                "byte-identical"
            } else {
                "DIFFERS"
            },
            live_bytes.len()
        );
    }
    Ok(())
}
