//! Replay log: final endpoint outcomes keyed by request digest, persisted as
//! line-delimited JSON so any run can be regenerated offline byte-for-byte.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

use super::transport::{ApiRequest, ApiResponse, Transport, TransportError};

/// Digest of one logical request: path plus canonical JSON body. serde_json
/// maps iterate sorted, so equal bodies digest equally regardless of how
/// they were built.
pub fn request_digest(path: &str, body: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(path.as_bytes());
    hasher.update(b"\n");
    hasher.update(body.to_string().as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReplayOutcome {
    Response { status: u16, body: String },
    Failure { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub digest: String,
    pub path: String,
    pub request: Value,
    pub outcome: ReplayOutcome,
}

/// In-memory index of recorded outcomes.
#[derive(Debug, Default, Clone)]
pub struct ReplayLog {
    entries: BTreeMap<String, ReplayEntry>,
}

impl ReplayLog {
    pub fn load(path: &Path) -> Result<ReplayLog> {
        let file = File::open(path)?;
        let mut log = ReplayLog::default();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(&line)?;
            log.entries.insert(entry.digest.clone(), entry);
        }
        Ok(log)
    }

    pub fn lookup(&self, digest: &str) -> Option<&ReplayOutcome> {
        self.entries.get(digest).map(|e| &e.outcome)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Append-only writer; one line per distinct request digest, flushed as it
/// goes so a crashed run still replays.
pub struct ReplayWriter {
    file: File,
    seen: std::collections::BTreeSet<String>,
}

impl ReplayWriter {
    pub fn create(path: &Path) -> Result<ReplayWriter> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(ReplayWriter {
            file: OpenOptions::new()
                .create(true)
                .write(true)
                .truncate(true)
                .open(path)?,
            seen: Default::default(),
        })
    }

    pub fn record(&mut self, entry: &ReplayEntry) -> Result<()> {
        if !self.seen.insert(entry.digest.clone()) {
            return Ok(());
        }
        serde_json::to_writer(&mut self.file, entry)?;
        self.file.write_all(b"\n")?;
        self.file.flush()?;
        Ok(())
    }
}

/// Transport that answers exclusively from a recorded log.
pub struct ReplayTransport {
    log: ReplayLog,
}

impl ReplayTransport {
    pub fn new(log: ReplayLog) -> ReplayTransport {
        ReplayTransport { log }
    }

    pub fn from_file(path: &Path) -> Result<ReplayTransport> {
        Ok(ReplayTransport::new(ReplayLog::load(path)?))
    }
}

impl Transport for ReplayTransport {
    fn execute(
        &self,
        request: &ApiRequest,
        _bearer: Option<&str>,
    ) -> std::result::Result<ApiResponse, TransportError> {
        let digest = request_digest(&request.path, &request.body);
        match self.log.lookup(&digest) {
            Some(ReplayOutcome::Response { status, body }) => Ok(ApiResponse {
                status: *status,
                body: body.clone(),
            }),
            Some(ReplayOutcome::Failure { message }) => {
                Err(TransportError::Network(message.clone()))
            }
            None => Err(TransportError::ReplayMiss(digest)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn digest_is_canonical_over_key_order() {
        let a = json!({"b": 1, "a": [1, 2]});
        let b = json!({"a": [1, 2], "b": 1});
        assert_eq!(request_digest("/x", &a), request_digest("/x", &b));
        assert_ne!(request_digest("/x", &a), request_digest("/y", &a));
    }

    #[test]
    fn roundtrip_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.jsonl");
        let body = json!({"model": "m", "messages": []});
        let digest = request_digest("/chat/completions", &body);

        let mut writer = ReplayWriter::create(&path).unwrap();
        writer
            .record(&ReplayEntry {
                digest: digest.clone(),
                path: "/chat/completions".into(),
                request: body.clone(),
                outcome: ReplayOutcome::Response {
                    status: 200,
                    body: "{\"ok\":true}".into(),
                },
            })
            .unwrap();
        // Duplicate digests are written once.
        writer
            .record(&ReplayEntry {
                digest: digest.clone(),
                path: "/chat/completions".into(),
                request: body.clone(),
                outcome: ReplayOutcome::Response {
                    status: 200,
                    body: "{\"ok\":true}".into(),
                },
            })
            .unwrap();

        let log = ReplayLog::load(&path).unwrap();
        assert_eq!(log.len(), 1);
        let transport = ReplayTransport::new(log);
        let hit = transport
            .execute(
                &ApiRequest {
                    path: "/chat/completions".into(),
                    body,
                },
                None,
            )
            .unwrap();
        assert_eq!(hit.status, 200);

        let miss = transport.execute(
            &ApiRequest {
                path: "/chat/completions".into(),
                body: json!({"other": 1}),
            },
            None,
        );
        assert!(matches!(miss, Err(TransportError::ReplayMiss(_))));
    }
}
