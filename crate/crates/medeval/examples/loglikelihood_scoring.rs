//! Log-likelihood choice scoring: each option is scored as a continuation
//! of the prompt via the completions echo+logprobs convention, then ranked
//! raw or length-normalized.
//!
//! Run with: `cargo run --example loglikelihood_scoring`

use std::sync::Arc;

use medeval::client::mock::MockTransport;
use medeval::client::{Client, EndpointConfig, ScoreRequest};
use medeval::scoring::{loglik_argmax, ChoiceScore, Normalization};

fn main() -> medeval::Result<()> {
    // The mock scores every whitespace token at logprob -1.0, so a
    // continuation's score is minus its token count.
    let transport = Arc::new(MockTransport::uniform_logprob_scorer(-1.0));
    let client = Client::new(
        EndpointConfig {
            base_url: "http://in-process-mock".into(),
            model_name: "scorer".into(),
            ..EndpointConfig::default()
        },
        transport,
    );

    let prompt = "Question: which option?\nOptions:\nA. aspirin\nB. oral amoxicillin\nC. supportive care only\nAnswer:";
    let choices = [
        ("A", "aspirin"),
        ("B", "oral amoxicillin"),
        ("C", "supportive care only"),
    ];

    let mut scores = Vec::new();
    for (label, text) in choices {
        let result = client.score_continuation(&ScoreRequest {
            prompt: prompt.to_string(),
            continuation: format!(" {text}"),
        })?;
        println!(
            "choice {label}: sum logprob {:+.1} over {} token(s), {} byte(s)",
            result.sum_logprob, result.token_count, result.byte_count
        );
        scores.push(ChoiceScore {
            label: label.to_string(),
            sum_logprob: result.sum_logprob,
            token_count: result.token_count,
            byte_count: result.byte_count,
        });
    }

    let labels: Vec<String> = choices.iter().map(|(l, _)| l.to_string()).collect();
    for normalization in [
        Normalization::Raw,
        Normalization::PerToken,
        Normalization::PerByte,
    ] {
        let winner = loglik_argmax(&scores, &labels, normalization)?;
        println!("{normalization:?} argmax -> {winner}");
    }
    Ok(())
}
