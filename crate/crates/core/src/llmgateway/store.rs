//! Content-addressed transcript store: one JSON file per request hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatMessage, GatewayError, SamplingParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub request_hash: String,
    pub messages: Vec<ChatMessage>,
    pub params: SamplingParams,
    pub completions: Vec<String>,
    pub recorded_at: String,
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    messages: &'a [ChatMessage],
    params: &'a SamplingParams,
}

/// SHA-256 over the canonical JSON of (messages, params).
pub fn transcript_key(messages: &[ChatMessage], params: &SamplingParams) -> String {
    let canonical = serde_json::to_vec(&CanonicalRequest { messages, params }).expect("request serializes");
    hex::encode(Sha256::digest(&canonical))
}

#[derive(Debug)]
pub struct TranscriptStore {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl TranscriptStore {
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<Transcript>, GatewayError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(GatewayError::Store(format!("{}: {e}", path.display()))),
        };
        let t: Transcript =
            serde_json::from_str(&text).map_err(|e| GatewayError::Store(format!("{}: {e}", path.display())))?;
        Ok(Some(t))
    }

    /// Persist a transcript under its own hash, replacing any previous one.
    pub fn put(&self, transcript: &Transcript) -> Result<(), GatewayError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let err = |e: std::io::Error| GatewayError::Store(format!("{}: {e}", self.root.display()));
        fs::create_dir_all(&self.root).map_err(err)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(err)?;
        let mut text = serde_json::to_string_pretty(transcript).expect("transcript serializes");
        text.push('\n');
        tmp.write_all(text.as_bytes()).map_err(err)?;
        tmp.persist(self.path_for(&transcript.request_hash))
            .map_err(|e| err(e.error))?;
        Ok(())
    }

    /// Store completions for a request, computing its key.
    pub fn record(
        &self,
        messages: &[ChatMessage],
        params: &SamplingParams,
        completions: Vec<String>,
        recorded_at: impl Into<String>,
    ) -> Result<String, GatewayError> {
        let key = transcript_key(messages, params);
        self.put(&Transcript {
            request_hash: key.clone(),
            messages: messages.to_vec(),
            params: params.clone(),
            completions,
            recorded_at: recorded_at.into(),
        })?;
        Ok(key)
    }
}
