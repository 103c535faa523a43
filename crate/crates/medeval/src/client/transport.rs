//! HTTP-level abstraction under the client: one JSON POST in, one status
//! plus body out. Keeping this a trait lets tests and replay runs stand in
//! for the network without touching the retry or parsing logic above.

use std::time::Duration;

use serde_json::Value;

/// One OpenAI-compatible API call.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiRequest {
    /// Path under the endpoint root, e.g. "/chat/completions".
    pub path: String,
    pub body: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    /// Connection, timeout, or I/O trouble; retryable.
    Network(String),
    /// Replay log has no entry for this request; never retryable.
    ReplayMiss(String),
}

pub trait Transport: Send + Sync {
    fn execute(
        &self,
        request: &ApiRequest,
        bearer: Option<&str>,
    ) -> Result<ApiResponse, TransportError>;
}

/// Real HTTP transport over an OpenAI-compatible endpoint root
/// (e.g. `http://host:8000/v1`).
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str, timeout: Duration) -> HttpTransport {
        HttpTransport {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new()
                .timeout_read(timeout)
                .timeout_write(timeout)
                .timeout_connect(timeout.min(Duration::from_secs(20)))
                .build(),
        }
    }
}

impl Transport for HttpTransport {
    fn execute(
        &self,
        request: &ApiRequest,
        bearer: Option<&str>,
    ) -> Result<ApiResponse, TransportError> {
        let url = format!("{}/{}", self.base_url, request.path.trim_start_matches('/'));
        let mut call = self
            .agent
            .post(&url)
            .set("Content-Type", "application/json");
        if let Some(token) = bearer {
            call = call.set("Authorization", &format!("Bearer {token}"));
        }
        match call.send_string(&request.body.to_string()) {
            Ok(response) => {
                let status = response.status();
                let body = response
                    .into_string()
                    .map_err(|e| TransportError::Network(format!("reading body: {e}")))?;
                Ok(ApiResponse { status, body })
            }
            Err(ureq::Error::Status(status, response)) => Ok(ApiResponse {
                status,
                body: response.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => Err(TransportError::Network(t.to_string())),
        }
    }
}
