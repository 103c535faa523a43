//! Deterministic mock endpoints for tests, examples, and offline smoke runs:
//! an in-process [`MockTransport`] and a real loopback HTTP [`MockServer`].

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

use super::transport::{ApiRequest, ApiResponse, Transport, TransportError};

/// What a scripted mock does with one call.
#[derive(Debug, Clone)]
pub enum MockOutcome {
    Reply(u16, Value),
    NetworkFailure(String),
}

type MockHandler = dyn Fn(&ApiRequest, Option<&str>) -> MockOutcome + Send + Sync;

/// In-process transport driven by a handler function.
pub struct MockTransport {
    handler: Arc<MockHandler>,
    calls: AtomicUsize,
}

impl MockTransport {
    pub fn new<F>(handler: F) -> MockTransport
    where
        F: Fn(&ApiRequest, Option<&str>) -> MockOutcome + Send + Sync + 'static,
    {
        MockTransport {
            handler: Arc::new(handler),
            calls: AtomicUsize::new(0),
        }
    }

    /// Replies to chat requests by transforming the last user message.
    pub fn chat_fn<F>(reply: F) -> MockTransport
    where
        F: Fn(&str) -> String + Send + Sync + 'static,
    {
        MockTransport::new(move |request, _| {
            let content = last_user_content(&request.body).unwrap_or_default();
            let n = request.body.get("n").and_then(Value::as_u64).unwrap_or(1);
            let texts: Vec<String> = (0..n).map(|_| reply(&content)).collect();
            MockOutcome::Reply(200, chat_completion_body(&texts))
        })
    }

    /// Echoes the last user message back as the completion.
    pub fn chat_echo() -> MockTransport {
        MockTransport::chat_fn(|content| content.to_string())
    }

    /// Pops scripted outcomes in order; panics if called more often than
    /// scripted.
    pub fn sequence(outcomes: Vec<MockOutcome>) -> MockTransport {
        let queue = Mutex::new(VecDeque::from(outcomes));
        MockTransport::new(move |_, _| {
            queue
                .lock()
                .expect("mock queue")
                .pop_front()
                .expect("mock called more times than scripted")
        })
    }

    /// Replies to plain-completion generation by transforming the prompt.
    pub fn completion_fn<F>(reply: F) -> MockTransport
    where
        F: Fn(&str) -> String + Send + Sync + 'static,
    {
        MockTransport::new(move |request, _| {
            let prompt = request
                .body
                .get("prompt")
                .and_then(Value::as_str)
                .unwrap_or_default();
            let n = request.body.get("n").and_then(Value::as_u64).unwrap_or(1);
            let texts: Vec<String> = (0..n).map(|_| reply(prompt)).collect();
            MockOutcome::Reply(200, completion_body(&texts))
        })
    }

    /// Scores every whitespace token at a fixed logprob (first token null,
    /// as real endpoints report it).
    pub fn uniform_logprob_scorer(per_token: f64) -> MockTransport {
        MockTransport::new(move |request, _| {
            let prompt = request
                .body
                .get("prompt")
                .and_then(Value::as_str)
                .unwrap_or_default();
            MockOutcome::Reply(200, completion_logprob_body(prompt, per_token))
        })
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn execute(
        &self,
        request: &ApiRequest,
        bearer: Option<&str>,
    ) -> Result<ApiResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match (self.handler)(request, bearer) {
            MockOutcome::Reply(status, body) => Ok(ApiResponse {
                status,
                body: body.to_string(),
            }),
            MockOutcome::NetworkFailure(message) => Err(TransportError::Network(message)),
        }
    }
}

/// The last user message content of a chat-completions request body.
pub fn last_user_content(body: &Value) -> Option<String> {
    body.get("messages")?
        .as_array()?
        .iter()
        .rev()
        .find(|m| m.get("role").and_then(Value::as_str) == Some("user"))?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

/// A chat-completions response carrying the given sample texts.
pub fn chat_completion_body(texts: &[String]) -> Value {
    let choices: Vec<Value> = texts
        .iter()
        .enumerate()
        .map(|(index, text)| {
            json!({
                "index": index,
                "message": {"role": "assistant", "content": text},
                "finish_reason": "stop",
            })
        })
        .collect();
    json!({
        "object": "chat.completion",
        "choices": choices,
        "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0},
    })
}

/// A plain-completion response carrying the given sample texts.
pub fn completion_body(texts: &[String]) -> Value {
    let choices: Vec<Value> = texts
        .iter()
        .enumerate()
        .map(|(index, text)| {
            json!({
                "index": index,
                "text": text,
                "finish_reason": "stop",
            })
        })
        .collect();
    json!({
        "object": "text_completion",
        "choices": choices,
    })
}

/// An echoed completions response with whitespace tokens, byte offsets, and
/// a constant per-token logprob (null for the first token).
pub fn completion_logprob_body(prompt: &str, per_token: f64) -> Value {
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    let mut logprobs: Vec<Value> = Vec::new();
    for (i, (offset, token)) in split_with_offsets(prompt).into_iter().enumerate() {
        tokens.push(Value::String(token));
        offsets.push(Value::from(offset));
        logprobs.push(if i == 0 {
            Value::Null
        } else {
            Value::from(per_token)
        });
    }
    json!({
        "object": "text_completion",
        "choices": [{
            "index": 0,
            "text": prompt,
            "finish_reason": "stop",
            "logprobs": {
                "tokens": tokens,
                "token_logprobs": logprobs,
                "text_offset": offsets,
            },
        }],
    })
}

/// Whitespace tokens with their byte offsets.
fn split_with_offsets(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, text[s..i].to_string()));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, text[s..].to_string()));
    }
    out
}

type ServerHandler = dyn Fn(&str, Option<&str>, &Value) -> (u16, Value) + Send + Sync;

/// Minimal deterministic HTTP server for exercising the real transport.
///
/// Handles one JSON POST per connection and closes it; the handler sees
/// `(path, bearer token, request body)`.
pub struct MockServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> std::io::Result<MockServer>
    where
        F: Fn(&str, Option<&str>, &Value) -> (u16, Value) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&shutdown);
        let handler: Arc<ServerHandler> = Arc::new(handler);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let handler = Arc::clone(&handler);
                std::thread::spawn(move || {
                    let _ = serve_connection(stream, &handler);
                });
            }
        });
        Ok(MockServer {
            addr,
            shutdown,
            handle: Some(handle),
        })
    }

    /// Endpoint root to hand to a client, e.g. `http://127.0.0.1:PORT/v1`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn serve_connection(stream: TcpStream, handler: &Arc<ServerHandler>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("/")
        .to_string();

    let mut content_length = 0usize;
    let mut bearer = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((key, value)) = line.split_once(':') {
            let value = value.trim();
            match key.to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.parse().unwrap_or(0),
                "authorization" => {
                    bearer = value.strip_prefix("Bearer ").map(str::to_string);
                }
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);

    let (status, reply) = handler(&path, bearer.as_deref(), &body);
    let reply = reply.to_string();
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        403 => "Forbidden",
        404 => "Not Found",
        429 => "Too Many Requests",
        _ => "Status",
    };
    let mut stream = reader.into_inner();
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )?;
    stream.flush()
}

/// Canned responses for the bundled 20-item mini benchmark, keyed by the
/// "Mini case NN" marker in the question. The styles deliberately cover the
/// extraction rules: directive answers, a last-marker revision, lone
/// letters, a prefix form, two wrong picks, and two abstentions.
pub const MINI_CASE_RESPONSES: [(&str, &str); 20] = [
    (
        "01",
        "The presentation suggests stable angina.\nAnswer: A. Aspirin",
    ),
    ("02", "Answer: B"),
    (
        "03",
        "Initially I favor Answer: A but the criteria are timed. Answer: C",
    ),
    (
        "04",
        "Answer: D. Humidified air and dexamethasone. Explanation: classic croup.",
    ),
    ("05", "answer: a"),
    ("06", "Reviewing the findings:\nB\nis the diagnosis."),
    ("07", "C) Levodopa-carbidopa treats the dopamine deficit."),
    ("08", "Answer: D. Graves disease."),
    ("09", "Answer: B. The pain pattern fits an ulcer."),
    ("10", "The stem does not give enough information to decide."),
    ("11", "Answer: C. Infective endocarditis."),
    ("12", "I cannot commit to a single option here."),
    ("13", "Answer: A. Inferior leads point to the RCA."),
    ("14", "Answer: C. A differential count would come first."),
    ("15", "Answer: C. Alzheimer disease."),
    ("16", "D"),
    ("17", "Answer: A. Pyloric stenosis."),
    ("18", "Answer: B. Primary hypothyroidism."),
    (
        "19",
        "Answer: C. Synpharyngitic hematuria is IgA nephropathy.",
    ),
    ("20", "Answer: D. Courvoisier sign."),
];

/// Hand-tallied outcome of running the mini benchmark against
/// [`mini_benchmark_reply`]: 16 of 20 correct, 2 abstentions.
pub const MINI_EXPECTED_CORRECT: usize = 16;
pub const MINI_EXPECTED_ABSTAIN: usize = 2;

/// Deterministic reply for a mini-benchmark prompt (for `chat_fn` or a
/// [`MockServer`] handler).
pub fn mini_benchmark_reply(user_content: &str) -> String {
    if let Some(pos) = user_content.find("Mini case ") {
        let case = &user_content[pos + 10..pos + 12];
        if let Some((_, reply)) = MINI_CASE_RESPONSES.iter().find(|(id, _)| *id == case) {
            return (*reply).to_string();
        }
    }
    "No idea.".to_string()
}
