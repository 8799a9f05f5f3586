use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, ChatRequest, LlmError};

/// One recorded exchange. `request` is kept for inspection; lookups go by
/// `digest` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub digest: String,
    pub request: ChatRequest,
    pub response: String,
}

/// Recorded responses, kept sorted by digest so the JSONL file is
/// byte-stable across recordings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    entries: BTreeMap<String, CassetteEntry>,
}

impl Cassette {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = fs::File::open(path)?;
        let mut cassette = Cassette::new();
        for (n, line) in io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("cassette line {}: {e}", n + 1))
            })?;
            cassette.entries.insert(entry.digest.clone(), entry);
        }
        Ok(cassette)
    }

    /// Loads `path` if it exists, otherwise starts empty.
    pub fn load_or_new(path: impl AsRef<Path>) -> io::Result<Self> {
        match Self::load(path) {
            Ok(c) => Ok(c),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let entries: Vec<&CassetteEntry> = self.entries.values().collect();
        crate::jsonl::write(path, &entries)
    }

    /// Inserts or overwrites the entry for this request's digest.
    pub fn insert(&mut self, request: &ChatRequest, response: impl Into<String>) {
        let digest = request.digest();
        self.entries.insert(
            digest.clone(),
            CassetteEntry { digest, request: request.clone(), response: response.into() },
        );
    }

    pub fn get(&self, digest: &str) -> Option<&CassetteEntry> {
        self.entries.get(digest)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CassetteEntry> {
        self.entries.values()
    }

    pub fn merge(&mut self, other: Cassette) {
        self.entries.extend(other.entries);
    }
}

/// Answers only from a cassette. Unknown requests fail with
/// [`BackendError::ReplayMiss`] instead of producing text.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    cassette: Arc<Cassette>,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> Self {
        Self { cassette: Arc::new(cassette) }
    }

    pub fn load(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self::new(Cassette::load(path)?))
    }

    pub fn len(&self) -> usize {
        self.cassette.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cassette.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let digest = request.digest();
        self.cassette
            .get(&digest)
            .map(|e| e.response.clone())
            .ok_or(BackendError::ReplayMiss { digest, stage: request.stage.as_str() })
    }
}

/// Forwards to a live backend and records every successful exchange.
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    cassette: Mutex<Cassette>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>, existing: Cassette) -> Self {
        Self { inner, cassette: Mutex::new(existing) }
    }

    pub fn cassette(&self) -> Cassette {
        self.cassette.lock().expect("cassette lock").clone()
    }
}

impl Backend for RecordingBackend {
    fn name(&self) -> &str {
        "recording"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let text = self.inner.complete(request)?;
        self.cassette.lock().expect("cassette lock").insert(request, text.clone());
        Ok(text)
    }
}

/// Sends each request to `live` and merges the answers into the cassette
/// at `path` (created if missing). Re-recording an existing request
/// overwrites its entry in place.
pub fn record_cassette(
    requests: &[ChatRequest],
    live: &dyn Backend,
    path: impl AsRef<Path>,
) -> Result<Cassette, LlmError> {
    let path = path.as_ref();
    let mut cassette = Cassette::load_or_new(path)?;
    for request in requests {
        let text = live.complete(request).map_err(LlmError::Backend)?;
        cassette.insert(request, text);
    }
    cassette.save(path)?;
    Ok(cassette)
}
