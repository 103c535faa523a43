//! OpenAI-compatible inference client: generation, continuation
//! log-probability scoring, bounded-parallel batches, and replay recording.
//!
//! Transient failures (connection trouble, 429, 5xx) retry with exponential
//! backoff and jitter up to `max_retries`; auth rejections and replay misses
//! never retry. Batch results come back in input order no matter how
//! completion interleaves, so downstream aggregation is independent of the
//! parallelism level.

pub mod mock;
mod replay;
mod transport;

pub use replay::{
    request_digest, ReplayEntry, ReplayLog, ReplayOutcome, ReplayTransport, ReplayWriter,
};
pub use transport::{ApiRequest, ApiResponse, HttpTransport, Transport, TransportError};

use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::prompt::Message;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// API root, e.g. "http://host:8000/v1".
    pub base_url: String,
    /// Environment variable holding the bearer token, if the endpoint wants
    /// one. The token itself never appears in config files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env: Option<String>,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub parallelism: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: String::new(),
            auth_token_env: None,
            model_name: String::new(),
            timeout_ms: 120_000,
            max_retries: 3,
            backoff_base_ms: 250,
            parallelism: 4,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_url.is_empty() {
            return Err(Error::Config("endpoint base_url is empty".into()));
        }
        if self.parallelism < 1 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(messages: Vec<Message>) -> GenerationRequest {
        GenerationRequest {
            messages,
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 512,
            n_samples: 1,
            seed: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::Config("generation request has no messages".into()));
        }
        if self.n_samples < 1 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if self.temperature < 0.0 {
            return Err(Error::Config("temperature must be non-negative".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config("top_p must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub samples: Vec<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

/// Plain-completion generation for endpoints without a chat route; the
/// prompt is a single text block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(prompt: String) -> CompletionRequest {
        CompletionRequest {
            prompt,
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 512,
            n_samples: 1,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub prompt: String,
    pub continuation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub sum_logprob: f64,
    pub token_count: usize,
    pub byte_count: usize,
}

pub struct Client {
    cfg: EndpointConfig,
    transport: Arc<dyn Transport>,
    recorder: Option<Mutex<ReplayWriter>>,
    auth_token: Option<String>,
    requests: AtomicU64,
    failures: AtomicU64,
}

impl Client {
    /// Client over any transport; resolves the auth token from the
    /// configured environment variable once, up front.
    pub fn new(cfg: EndpointConfig, transport: Arc<dyn Transport>) -> Client {
        let auth_token = cfg
            .auth_token_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok())
            .filter(|token| !token.is_empty());
        Client {
            cfg,
            transport,
            recorder: None,
            auth_token,
            requests: AtomicU64::new(0),
            failures: AtomicU64::new(0),
        }
    }

    /// Client over real HTTP at `cfg.base_url`.
    pub fn over_http(cfg: EndpointConfig) -> Result<Client> {
        cfg.validate()?;
        let transport = Arc::new(HttpTransport::new(
            &cfg.base_url,
            Duration::from_millis(cfg.timeout_ms),
        ));
        Ok(Client::new(cfg, transport))
    }

    /// Client answering from a recorded replay log; never touches the
    /// network.
    pub fn over_replay(cfg: EndpointConfig, replay_path: &Path) -> Result<Client> {
        let transport = Arc::new(ReplayTransport::from_file(replay_path)?);
        Ok(Client::new(cfg, transport))
    }

    /// Record every final outcome to `path` for later replay.
    pub fn with_recorder(mut self, path: &Path) -> Result<Client> {
        self.recorder = Some(Mutex::new(ReplayWriter::create(path)?));
        Ok(self)
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// Endpoint calls issued (retried attempts not counted; sequential
    /// fallback calls are).
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    /// Generation or scoring operations that ended in an error.
    pub fn failure_count(&self) -> u64 {
        self.failures.load(Ordering::SeqCst)
    }

    fn track<R>(&self, result: Result<R>) -> Result<R> {
        if result.is_err() {
            self.failures.fetch_add(1, Ordering::SeqCst);
        }
        result
    }

    fn sleep_backoff(&self, attempt: u32) {
        if self.cfg.backoff_base_ms == 0 {
            return;
        }
        let factor = 1u64 << attempt.min(16);
        let jitter = rand::thread_rng().gen_range(0..=self.cfg.backoff_base_ms / 2);
        std::thread::sleep(Duration::from_millis(
            self.cfg.backoff_base_ms.saturating_mul(factor) + jitter,
        ));
    }

    /// Run one request to a final outcome: retries transient failures, fails
    /// fast on auth errors, and records whatever it settles on.
    fn execute_raw(&self, path: &str, body: Value) -> Result<ApiResponse> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let request = ApiRequest {
            path: path.to_string(),
            body,
        };
        let mut attempt: u32 = 0;
        let outcome = loop {
            let transient = match self.transport.execute(&request, self.auth_token.as_deref()) {
                Ok(response) => match response.status {
                    401 | 403 => {
                        break Err(Error::Auth(format!(
                            "endpoint returned {}: {}",
                            response.status,
                            snippet(&response.body)
                        )))
                    }
                    429 | 500..=599 => format!("status {}", response.status),
                    _ => break Ok(response),
                },
                Err(TransportError::ReplayMiss(digest)) => break Err(Error::ReplayMiss(digest)),
                Err(TransportError::Network(message)) => message,
            };
            if attempt >= self.cfg.max_retries {
                break Err(Error::RetriesExhausted {
                    attempts: attempt + 1,
                    last: transient,
                });
            }
            self.sleep_backoff(attempt);
            attempt += 1;
        };

        if let Some(recorder) = &self.recorder {
            let entry = ReplayEntry {
                digest: request_digest(&request.path, &request.body),
                path: request.path.clone(),
                request: request.body.clone(),
                outcome: match &outcome {
                    Ok(response) => ReplayOutcome::Response {
                        status: response.status,
                        body: response.body.clone(),
                    },
                    Err(e) => ReplayOutcome::Failure {
                        message: e.to_string(),
                    },
                },
            };
            recorder
                .lock()
                .expect("replay writer lock")
                .record(&entry)?;
        }
        outcome
    }

    fn chat_body(&self, req: &GenerationRequest, n: usize, seed: Option<u64>) -> Value {
        let mut body = json!({
            "model": self.cfg.model_name,
            "messages": req.messages,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "max_tokens": req.max_tokens,
        });
        if n > 1 {
            body["n"] = json!(n);
        }
        if let Some(seed) = seed {
            body["seed"] = json!(seed);
        }
        body
    }

    /// Chat-completions generation; returns exactly `n_samples` samples.
    ///
    /// If the endpoint rejects `n > 1` with a 4xx, the client transparently
    /// falls back to `n` sequential single-sample calls (bumping the seed per
    /// call when one was given, so the request bodies stay distinct).
    pub fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult> {
        let result = self.generate_inner(req);
        self.track(result)
    }

    fn generate_inner(&self, req: &GenerationRequest) -> Result<GenerationResult> {
        req.validate()?;
        self.run_generation("/chat/completions", req.n_samples, req.seed, |n, seed| {
            self.chat_body(req, n, seed)
        })
    }

    /// Single-block generation over the plain completions route, for
    /// endpoints without a chat interface. Same sampling and fallback
    /// semantics as [`Client::generate`].
    pub fn complete(&self, req: &CompletionRequest) -> Result<GenerationResult> {
        let result = self.complete_inner(req);
        self.track(result)
    }

    fn complete_inner(&self, req: &CompletionRequest) -> Result<GenerationResult> {
        if req.prompt.is_empty() {
            return Err(Error::Config(
                "completion request has an empty prompt".into(),
            ));
        }
        if req.n_samples < 1 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        self.run_generation("/completions", req.n_samples, req.seed, |n, seed| {
            let mut body = json!({
                "model": self.cfg.model_name,
                "prompt": req.prompt,
                "temperature": req.temperature,
                "top_p": req.top_p,
                "max_tokens": req.max_tokens,
            });
            if n > 1 {
                body["n"] = json!(n);
            }
            if let Some(seed) = seed {
                body["seed"] = json!(seed);
            }
            body
        })
    }

    fn run_generation<F>(
        &self,
        path: &str,
        n_samples: usize,
        seed: Option<u64>,
        build_body: F,
    ) -> Result<GenerationResult>
    where
        F: Fn(usize, Option<u64>) -> Value,
    {
        let parse = if path == "/completions" {
            parse_completion_response
        } else {
            parse_chat_response
        };
        let response = self.execute_raw(path, build_body(n_samples, seed))?;
        match response.status {
            200 => {
                let result = parse(&response.body)?;
                if result.samples.len() != n_samples {
                    return Err(Error::BadResponse(format!(
                        "asked for {} samples, got {}",
                        n_samples,
                        result.samples.len()
                    )));
                }
                Ok(result)
            }
            status if n_samples > 1 && (400..500).contains(&status) => {
                let mut samples = Vec::with_capacity(n_samples);
                let mut usage: Option<Usage> = None;
                for i in 0..n_samples {
                    let seed = seed.map(|s| s.wrapping_add(i as u64));
                    let response = self.execute_raw(path, build_body(1, seed))?;
                    if response.status != 200 {
                        return Err(endpoint_error(&response));
                    }
                    let one = parse(&response.body)?;
                    if let Some(u) = one.usage {
                        let total = usage.get_or_insert(Usage::default());
                        total.prompt_tokens += u.prompt_tokens;
                        total.completion_tokens += u.completion_tokens;
                        total.total_tokens += u.total_tokens;
                    }
                    samples.extend(one.samples);
                }
                Ok(GenerationResult { samples, usage })
            }
            _ => Err(endpoint_error(&response)),
        }
    }

    /// Sum of the continuation's token log-probabilities under the prompt,
    /// via the completions echo+logprobs convention. Token offsets are byte
    /// positions into the concatenated text; tokens at or past the prompt
    /// length belong to the continuation.
    pub fn score_continuation(&self, req: &ScoreRequest) -> Result<ScoreResult> {
        let result = self.score_inner(req);
        self.track(result)
    }

    fn score_inner(&self, req: &ScoreRequest) -> Result<ScoreResult> {
        if req.continuation.is_empty() {
            return Err(Error::Config("cannot score an empty continuation".into()));
        }
        if req.prompt.is_empty() {
            return Err(Error::Config("cannot score under an empty prompt".into()));
        }
        let full = format!("{}{}", req.prompt, req.continuation);
        let body = json!({
            "model": self.cfg.model_name,
            "prompt": full,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
        });
        let response = self.execute_raw("/completions", body)?;
        if response.status == 404 {
            return Err(Error::Capability(
                "endpoint has no completions route with echo+logprobs; use generative mode".into(),
            ));
        }
        if response.status != 200 {
            return Err(endpoint_error(&response));
        }
        let parsed: Value = serde_json::from_str(&response.body)
            .map_err(|e| Error::BadResponse(format!("invalid json: {e}")))?;
        let choice = parsed
            .get("choices")
            .and_then(Value::as_array)
            .and_then(|c| c.first())
            .ok_or_else(|| Error::BadResponse("response has no choices".into()))?;
        let logprobs = choice
            .get("logprobs")
            .filter(|v| !v.is_null())
            .ok_or_else(|| {
                Error::Capability("endpoint returned no token logprobs; use generative mode".into())
            })?;
        let token_logprobs = logprobs
            .get("token_logprobs")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::BadResponse("logprobs lack token_logprobs".into()))?;
        let offsets = logprobs
            .get("text_offset")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::BadResponse("logprobs lack text_offset".into()))?;
        if token_logprobs.len() != offsets.len() {
            return Err(Error::BadResponse(
                "token_logprobs and text_offset lengths differ".into(),
            ));
        }

        let boundary = req.prompt.len();
        let mut sum = 0.0;
        let mut count = 0usize;
        for (lp, offset) in token_logprobs.iter().zip(offsets) {
            let offset = offset
                .as_u64()
                .ok_or_else(|| Error::BadResponse("non-integer text offset".into()))?
                as usize;
            if offset >= boundary {
                let lp = lp.as_f64().ok_or_else(|| {
                    Error::BadResponse("continuation token has null logprob".into())
                })?;
                sum += lp;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::BadResponse(
                "no tokens fell inside the continuation".into(),
            ));
        }
        Ok(ScoreResult {
            sum_logprob: sum,
            token_count: count,
            byte_count: req.continuation.len(),
        })
    }

    /// Run `items` through `run` with at most `parallelism` in flight;
    /// result `i` always corresponds to item `i`, and per-item errors stay
    /// in their slot.
    pub fn run_batch<T, R, F>(&self, items: &[T], run: F) -> Vec<Result<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R> + Sync,
    {
        if items.is_empty() {
            return Vec::new();
        }
        let workers = self.cfg.parallelism.max(1).min(items.len());
        let next = AtomicUsize::new(0);
        let per_worker: Vec<Vec<(usize, Result<R>)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    scope.spawn(|| {
                        let mut out = Vec::new();
                        loop {
                            let i = next.fetch_add(1, Ordering::SeqCst);
                            if i >= items.len() {
                                break;
                            }
                            out.push((i, run(&items[i])));
                        }
                        out
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("batch worker panicked"))
                .collect()
        });
        let mut slots: Vec<Option<Result<R>>> = (0..items.len()).map(|_| None).collect();
        for (i, result) in per_worker.into_iter().flatten() {
            slots[i] = Some(result);
        }
        slots
            .into_iter()
            .map(|s| s.expect("every slot gets exactly one result"))
            .collect()
    }

    pub fn generate_batch(&self, requests: &[GenerationRequest]) -> Vec<Result<GenerationResult>> {
        self.run_batch(requests, |r| self.generate(r))
    }

    pub fn score_batch(&self, requests: &[ScoreRequest]) -> Vec<Result<ScoreResult>> {
        self.run_batch(requests, |r| self.score_continuation(r))
    }
}

fn snippet(body: &str) -> String {
    let mut s: String = body.chars().take(200).collect();
    if s.len() < body.len() {
        s.push('…');
    }
    s
}

fn endpoint_error(response: &ApiResponse) -> Error {
    Error::Endpoint(format!(
        "status {}: {}",
        response.status,
        snippet(&response.body)
    ))
}

fn parse_chat_response(body: &str) -> Result<GenerationResult> {
    let parsed: Value =
        serde_json::from_str(body).map_err(|e| Error::BadResponse(format!("invalid json: {e}")))?;
    let choices = parsed
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::BadResponse("response has no choices array".into()))?;
    let mut samples = Vec::with_capacity(choices.len());
    for choice in choices {
        let text = choice
            .get("message")
            .and_then(|m| m.get("content"))
            .and_then(Value::as_str)
            .ok_or_else(|| Error::BadResponse("choice lacks message.content".into()))?;
        samples.push(Sample {
            text: text.to_string(),
            finish_reason: choice
                .get("finish_reason")
                .and_then(Value::as_str)
                .map(str::to_string),
        });
    }
    if samples.is_empty() {
        return Err(Error::BadResponse("response has zero choices".into()));
    }
    let usage = parse_usage(&parsed);
    Ok(GenerationResult { samples, usage })
}

fn parse_completion_response(body: &str) -> Result<GenerationResult> {
    let parsed: Value =
        serde_json::from_str(body).map_err(|e| Error::BadResponse(format!("invalid json: {e}")))?;
    let choices = parsed
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::BadResponse("response has no choices array".into()))?;
    let mut samples = Vec::with_capacity(choices.len());
    for choice in choices {
        let text = choice
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::BadResponse("choice lacks text".into()))?;
        samples.push(Sample {
            text: text.to_string(),
            finish_reason: choice
                .get("finish_reason")
                .and_then(Value::as_str)
                .map(str::to_string),
        });
    }
    if samples.is_empty() {
        return Err(Error::BadResponse("response has zero choices".into()));
    }
    let usage = parse_usage(&parsed);
    Ok(GenerationResult { samples, usage })
}

fn parse_usage(parsed: &Value) -> Option<Usage> {
    parsed.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
            total_tokens: u.get("total_tokens")?.as_u64()?,
        })
    })
}
