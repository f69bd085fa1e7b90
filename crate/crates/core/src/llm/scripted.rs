//! Scripted replay and recording.
//!
//! A script is an ordered list of `{kind, response}` entries. The n-th entry
//! of a given kind answers the n-th request of that kind within the session,
//! so edits to prompt wording do not invalidate recordings. Strict mode also
//! checks a content digest of the request messages.

use super::{BackendError, CompletionBackend, CompletionRequest};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub kind: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

impl ScriptEntry {
    pub fn new(kind: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            response: response.into(),
            digest: None,
        }
    }
}

/// Hex SHA-256 over the request's roles and message contents.
pub fn request_digest(request: &CompletionRequest) -> String {
    let mut hasher = Sha256::new();
    for message in &request.messages {
        hasher.update(format!("{:?}", message.role).as_bytes());
        hasher.update([0u8]);
        hasher.update(message.content.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug)]
pub struct ScriptedBackend {
    by_kind: HashMap<String, Vec<ScriptEntry>>,
    cursors: Mutex<HashMap<String, usize>>,
    strict: bool,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let mut by_kind: HashMap<String, Vec<ScriptEntry>> = HashMap::new();
        for entry in entries {
            by_kind.entry(entry.kind.clone()).or_default().push(entry);
        }
        Self {
            by_kind,
            cursors: Mutex::new(HashMap::new()),
            strict: false,
        }
    }

    /// Requires each entry's digest (when present) to match the request.
    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Entries not yet consumed, per kind.
    pub fn remaining(&self) -> HashMap<String, usize> {
        let cursors = self.cursors.lock().expect("cursor lock");
        self.by_kind
            .iter()
            .map(|(k, v)| (k.clone(), v.len() - cursors.get(k).copied().unwrap_or(0)))
            .filter(|(_, n)| *n > 0)
            .collect()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn label(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let ordinal = cursors.get(&request.kind).copied().unwrap_or(0);
        let miss = || BackendError::ScriptMiss {
            kind: request.kind.clone(),
            ordinal,
        };
        let entry = self
            .by_kind
            .get(&request.kind)
            .and_then(|entries| entries.get(ordinal))
            .ok_or_else(miss)?;
        if self.strict {
            if let Some(expected) = &entry.digest {
                if *expected != request_digest(request) {
                    return Err(miss());
                }
            }
        }
        cursors.insert(request.kind.clone(), ordinal + 1);
        Ok(entry.response.clone())
    }
}

/// Wraps a backend and records every exchange as a replayable script.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<ScriptEntry>>,
}

impl<B: CompletionBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<ScriptEntry> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries()).expect("script serializes")
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    fn label(&self) -> &str {
        self.inner.label()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let text = self.inner.complete(request)?;
        self.log.lock().expect("log lock").push(ScriptEntry {
            kind: request.kind.clone(),
            response: text.clone(),
            digest: Some(request_digest(request)),
        });
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(kind: &str, text: &str) -> CompletionRequest {
        CompletionRequest::prompt(kind, text)
    }

    #[test]
    fn replays_by_kind_ordinal() {
        let backend = ScriptedBackend::new(vec![
            ScriptEntry::new("slot_fill", "fill-1"),
            ScriptEntry::new("question_gen", "q-1"),
            ScriptEntry::new("slot_fill", "fill-2"),
        ]);
        assert_eq!(backend.complete(&req("question_gen", "a")).unwrap(), "q-1");
        assert_eq!(backend.complete(&req("slot_fill", "b")).unwrap(), "fill-1");
        assert_eq!(backend.complete(&req("slot_fill", "c")).unwrap(), "fill-2");
        assert_eq!(
            backend.complete(&req("slot_fill", "d")),
            Err(BackendError::ScriptMiss {
                kind: "slot_fill".into(),
                ordinal: 2
            })
        );
        assert!(matches!(
            backend.complete(&req("user_sim", "e")),
            Err(BackendError::ScriptMiss { .. })
        ));
    }

    #[test]
    fn strict_mode_checks_digest() {
        let good = req("slot_fill", "expected prompt");
        let mut entry = ScriptEntry::new("slot_fill", "{}");
        entry.digest = Some(request_digest(&good));
        let backend = ScriptedBackend::new(vec![entry.clone()]).strict();
        assert!(backend.complete(&req("slot_fill", "edited prompt")).is_err());
        assert_eq!(backend.complete(&good).unwrap(), "{}");

        let lenient = ScriptedBackend::new(vec![entry]);
        assert!(lenient.complete(&req("slot_fill", "edited prompt")).is_ok());
    }

    #[test]
    fn recording_replays_identically() {
        let source = ScriptedBackend::new(vec![
            ScriptEntry::new("a", "1"),
            ScriptEntry::new("b", "2"),
            ScriptEntry::new("a", "3"),
        ]);
        let recorder = RecordingBackend::new(source);
        let requests = [req("a", "x"), req("b", "y"), req("a", "z")];
        let first: Vec<_> = requests.iter().map(|r| recorder.complete(r).unwrap()).collect();
        let replay = ScriptedBackend::from_json(&recorder.to_json()).unwrap().strict();
        let second: Vec<_> = requests.iter().map(|r| replay.complete(r).unwrap()).collect();
        assert_eq!(first, second);
        assert!(replay.remaining().is_empty());
    }
}
