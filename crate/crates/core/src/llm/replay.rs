//! Deterministic record/replay of model traffic.
//!
//! A transcript is JSON Lines, one [`TranscriptRecord`] per call, keyed by a
//! SHA-256 digest of the canonical `(agent, model, messages)` triple. When a
//! key was recorded several times the replay serves the responses in order
//! and repeats the last one once they run out.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, GatewayError, LlmRequest, LlmResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub key: String,
    pub request: LlmRequest,
    pub response: LlmResponse,
}

fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Hex digest identifying a request for replay purposes.
///
/// Fields are serialized in a fixed (sorted) order with whitespace runs
/// collapsed, so cosmetic reformatting of a prompt keeps its key while any
/// wording change produces a new one.
pub fn request_key(request: &LlmRequest) -> String {
    let mut canonical = String::new();
    canonical.push_str("{\"agent_name\":");
    canonical.push_str(&serde_json::to_string(request.agent.as_str()).expect("string serializes"));
    canonical.push_str(",\"messages\":[");
    for (i, m) in request.messages.iter().enumerate() {
        if i > 0 {
            canonical.push(',');
        }
        canonical.push_str("{\"content\":");
        canonical.push_str(&serde_json::to_string(&normalize_whitespace(&m.content)).expect("string serializes"));
        canonical.push_str(",\"role\":");
        canonical.push_str(&serde_json::to_string(m.role.as_str()).expect("string serializes"));
        canonical.push('}');
    }
    canonical.push_str("],\"model_id\":");
    canonical.push_str(&serde_json::to_string(&normalize_whitespace(&request.model_id)).expect("string serializes"));
    canonical.push('}');
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Default)]
pub struct ReplayBackend {
    recordings: HashMap<String, Vec<LlmResponse>>,
    cursors: Mutex<HashMap<String, usize>>,
    source: Option<PathBuf>,
}

impl ReplayBackend {
    /// Loads a transcript file. Every record's key is re-derived from its
    /// request; a mismatch means the file was produced by a different keying
    /// scheme and is rejected.
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let file = File::open(path)?;
        let mut records = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TranscriptRecord =
                serde_json::from_str(&line).map_err(|e| GatewayError::CorruptTranscript { line: idx + 1, reason: e.to_string() })?;
            let expected = request_key(&record.request);
            if record.key != expected {
                return Err(GatewayError::CorruptTranscript {
                    line: idx + 1,
                    reason: format!("key {} does not match request digest {expected}", record.key),
                });
            }
            records.push(record);
        }
        let mut backend = Self::from_records(records);
        backend.source = Some(path.to_path_buf());
        Ok(backend)
    }

    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        let mut recordings: HashMap<String, Vec<LlmResponse>> = HashMap::new();
        for r in records {
            recordings.entry(r.key).or_default().push(r.response);
        }
        ReplayBackend { recordings, cursors: Mutex::new(HashMap::new()), source: None }
    }

    pub fn len(&self) -> usize {
        self.recordings.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
        let key = request_key(request);
        let responses = self.recordings.get(&key).ok_or_else(|| BackendError::ReplayMiss { key: key.clone(), agent: request.agent })?;
        let mut cursors = self.cursors.lock().expect("replay cursor lock poisoned");
        let cursor = cursors.entry(key).or_insert(0);
        let response = responses[(*cursor).min(responses.len() - 1)].clone();
        *cursor += 1;
        Ok(response)
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}

/// Forwards to an inner backend and appends every successful exchange to a
/// transcript file.
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    sink: Mutex<File>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>, transcript: &Path) -> Result<Self, GatewayError> {
        if let Some(parent) = transcript.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let sink = OpenOptions::new().create(true).append(true).open(transcript)?;
        Ok(RecordingBackend { inner, sink: Mutex::new(sink) })
    }
}

impl Backend for RecordingBackend {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
        let response = self.inner.complete(request)?;
        let record = TranscriptRecord { key: request_key(request), request: request.clone(), response: response.clone() };
        let mut line = serde_json::to_string(&record).expect("transcript record serializes");
        line.push('\n');
        let mut sink = self.sink.lock().expect("transcript lock poisoned");
        sink.write_all(line.as_bytes())
            .and_then(|_| sink.flush())
            .map_err(|e| BackendError::Unavailable(format!("cannot append to transcript: {e}")))?;
        Ok(response)
    }

    fn name(&self) -> &'static str {
        "record"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{AgentName, Message};

    fn req(text: &str) -> LlmRequest {
        LlmRequest::new(AgentName::Processor, "gpt-4o", vec![Message::system("parse"), Message::user(text)])
    }

    struct Echo;

    impl Backend for Echo {
        fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
            Ok(LlmResponse {
                content: format!("echo: {}", request.last_user_content().unwrap_or_default()),
                input_tokens: 12,
                output_tokens: 3,
                latency: 0.25,
                web_search_calls: 0,
            })
        }

        fn name(&self) -> &'static str {
            "echo"
        }
    }

    #[test]
    fn key_ignores_whitespace_layout_but_not_wording() {
        assert_eq!(request_key(&req("Run VAE  on\ncardio.mat ")), request_key(&req("Run VAE on cardio.mat")));
        assert_ne!(request_key(&req("Run VAE on cardio.mat")), request_key(&req("Run AE on cardio.mat")));
        let mut other_agent = req("Run VAE on cardio.mat");
        other_agent.agent = AgentName::Selector;
        assert_ne!(request_key(&other_agent), request_key(&req("Run VAE on cardio.mat")));
        let mut other_model = req("Run VAE on cardio.mat");
        other_model.model_id = "o4-mini".into();
        assert_ne!(request_key(&other_model), request_key(&req("Run VAE on cardio.mat")));
        assert_eq!(request_key(&req("x")).len(), 64);
    }

    #[test]
    fn record_then_replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let recorder = RecordingBackend::new(Arc::new(Echo), &path).unwrap();
        let live = recorder.complete(&req("hello")).unwrap();
        let replay = ReplayBackend::open(&path).unwrap();
        assert_eq!(replay.len(), 1);
        assert_eq!(replay.complete(&req("hello")).unwrap(), live);
        // Repeats the last recording once exhausted.
        assert_eq!(replay.complete(&req("hello")).unwrap(), live);
    }

    #[test]
    fn absent_request_is_a_replay_miss() {
        let replay = ReplayBackend::from_records(Vec::new());
        assert!(matches!(replay.complete(&req("anything")), Err(BackendError::ReplayMiss { .. })));
    }

    #[test]
    fn repeated_keys_are_served_in_order() {
        let r = req("vote");
        let records =
            ["A", "B", "C"].iter().map(|v| TranscriptRecord { key: request_key(&r), request: r.clone(), response: LlmResponse::text(*v) });
        let replay = ReplayBackend::from_records(records);
        let got: Vec<_> = (0..4).map(|_| replay.complete(&r).unwrap().content).collect();
        assert_eq!(got, ["A", "B", "C", "C"]);
    }

    #[test]
    fn corrupt_lines_are_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "\n{not json}\n").unwrap();
        match ReplayBackend::open(&path) {
            Err(GatewayError::CorruptTranscript { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stale_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stale.jsonl");
        let record = TranscriptRecord { key: "00".repeat(32), request: req("hello"), response: LlmResponse::text("hi") };
        std::fs::write(&path, serde_json::to_string(&record).unwrap()).unwrap();
        assert!(matches!(ReplayBackend::open(&path), Err(GatewayError::CorruptTranscript { line: 1, .. })));
    }
}
