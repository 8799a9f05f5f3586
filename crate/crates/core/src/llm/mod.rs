//! Chat-completion client.
//!
//! [`LlmClient`] wraps a [`Backend`] with a response cache keyed by request
//! digest and a retry loop for transient failures. Backends:
//!
//! * [`HttpBackend`]: an OpenAI-compatible `/chat/completions` endpoint.
//! * [`ReplayBackend`]: answers from a recorded cassette and fails on any
//!   request it has not seen.
//! * [`RecordingBackend`]: forwards to another backend and records every
//!   exchange into a cassette.
//! * [`SimulatedBackend`]: a rule-based offline stand-in that understands the
//!   pipeline's own prompts, used for demos and for recording fixtures.

mod cache;
mod cassette;
mod http;
pub mod json;
mod simulated;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResponseCache;
pub use cassette::{record_cassette, Cassette, CassetteEntry, RecordingBackend, ReplayBackend};
pub use http::{HttpBackend, HttpConfig};
pub use simulated::SimulatedBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Pipeline stage that issued a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Judge,
    Seed,
    Goal,
    Flow,
    Dialogue,
    Complicate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Judge,
        Stage::Seed,
        Stage::Goal,
        Stage::Flow,
        Stage::Dialogue,
        Stage::Complicate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Judge => "judge",
            Stage::Seed => "seed",
            Stage::Goal => "goal",
            Stage::Flow => "flow",
            Stage::Dialogue => "dialogue",
            Stage::Complicate => "complicate",
        }
    }
}

/// Sampling parameters for one request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Decoding {
    /// Dialogue generation samples at 0.7 for diversity; every other stage
    /// decodes greedily. `top_p` is 1 everywhere.
    pub fn for_stage(stage: Stage) -> Self {
        let temperature = if stage == Stage::Dialogue { 0.7 } else { 0.0 };
        Self { temperature, top_p: 1.0, max_tokens: None }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::InvalidRequest(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub stage: Stage,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    messages: &'a [Message],
    temperature: f64,
    top_p: f64,
}

impl ChatRequest {
    /// Builds a request with the stage's default decoding parameters.
    pub fn new(stage: Stage, messages: Vec<Message>) -> Result<Self, LlmError> {
        Self::with_decoding(stage, messages, Decoding::for_stage(stage))
    }

    pub fn with_decoding(
        stage: Stage,
        messages: Vec<Message>,
        decoding: Decoding,
    ) -> Result<Self, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        decoding.validate()?;
        Ok(Self {
            stage,
            messages,
            temperature: decoding.temperature,
            top_p: decoding.top_p,
            max_tokens: decoding.max_tokens,
        })
    }

    /// Hex SHA-256 over the messages (in order) and the sampling parameters.
    pub fn digest(&self) -> String {
        let input = DigestInput {
            messages: &self.messages,
            temperature: self.temperature,
            top_p: self.top_p,
        };
        let bytes = serde_json::to_vec(&input).expect("request serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Text of the final user message.
    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub cached: bool,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    /// Worth retrying: network trouble, rate limits, server errors.
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Fatal(String),
    #[error("replay cassette has no entry for request {digest} ({stage})")]
    ReplayMiss { digest: String, stage: &'static str },
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error(transparent)]
    Backend(BackendError),
    #[error("cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

impl LlmError {
    pub fn is_replay_miss(&self) -> bool {
        matches!(self, LlmError::Backend(BackendError::ReplayMiss { .. }))
    }
}

/// Something that turns a chat request into completion text.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    /// Delay before attempt `n + 1` after `n` failures (doubling, capped).
    pub fn delay(&self, failures: u32) -> Duration {
        let factor = 2u32.saturating_pow(failures.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Counters for one client; cheap to read at any time.
#[derive(Debug, Default)]
struct Counters {
    requests: AtomicUsize,
    cache_hits: AtomicUsize,
    backend_calls: AtomicUsize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientStats {
    pub requests: usize,
    pub cache_hits: usize,
    pub backend_calls: usize,
}

impl ClientStats {
    pub fn since(&self, earlier: &ClientStats) -> ClientStats {
        ClientStats {
            requests: self.requests - earlier.requests,
            cache_hits: self.cache_hits - earlier.cache_hits,
            backend_calls: self.backend_calls - earlier.backend_calls,
        }
    }
}

pub struct LlmClient {
    backend: Arc<dyn Backend>,
    cache: ResponseCache,
    retry: RetryPolicy,
    decoding: HashMap<Stage, Decoding>,
    counters: Counters,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            cache: ResponseCache::in_memory(),
            retry: RetryPolicy::default(),
            decoding: HashMap::new(),
            counters: Counters::default(),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Replaces the sampling parameters of every request issued for `stage`.
    pub fn with_decoding(mut self, stage: Stage, decoding: Decoding) -> Result<Self, LlmError> {
        decoding.validate()?;
        self.decoding.insert(stage, decoding);
        Ok(self)
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn stats(&self) -> ClientStats {
        ClientStats {
            requests: self.counters.requests.load(Ordering::Relaxed),
            cache_hits: self.counters.cache_hits.load(Ordering::Relaxed),
            backend_calls: self.counters.backend_calls.load(Ordering::Relaxed),
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let overridden;
        let request = match self.decoding.get(&request.stage) {
            Some(d) => {
                overridden = ChatRequest {
                    temperature: d.temperature,
                    top_p: d.top_p,
                    max_tokens: d.max_tokens,
                    ..request.clone()
                };
                &overridden
            }
            None => request,
        };
        self.counters.requests.fetch_add(1, Ordering::Relaxed);
        let digest = request.digest();
        if let Some(text) = self.cache.get(&digest)? {
            self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(ChatResponse { text, cached: true, attempt_count: 1 });
        }
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.counters.backend_calls.fetch_add(1, Ordering::Relaxed);
            match self.backend.complete(request) {
                Ok(text) if !text.trim().is_empty() => {
                    self.cache.put(&digest, &text)?;
                    return Ok(ChatResponse { text, cached: false, attempt_count: attempt });
                }
                Ok(_) => {
                    return Err(LlmError::Backend(BackendError::Fatal(
                        "empty completion".into(),
                    )))
                }
                Err(BackendError::Transient(msg)) => {
                    if attempt >= max {
                        return Err(LlmError::Exhausted { attempts: attempt, last: msg });
                    }
                    let delay = self.retry.delay(attempt);
                    log::warn!(
                        "{} request failed (attempt {attempt}/{max}): {msg}; retrying in {delay:?}",
                        request.stage.as_str()
                    );
                    std::thread::sleep(delay);
                }
                Err(e) => return Err(LlmError::Backend(e)),
            }
        }
    }

    /// Completes and returns only the text.
    pub fn text(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.complete(request).map(|r| r.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Flaky {
        failures: Mutex<u32>,
    }

    impl Backend for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
            let mut f = self.failures.lock().unwrap();
            if *f > 0 {
                *f -= 1;
                Err(BackendError::Transient("503".into()))
            } else {
                Ok("ok".into())
            }
        }
    }

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new(Stage::Judge, vec![Message::user(text)]).unwrap()
    }

    #[test]
    fn stage_decoding_defaults() {
        assert_eq!(Decoding::for_stage(Stage::Dialogue).temperature, 0.7);
        for stage in Stage::ALL.into_iter().filter(|s| *s != Stage::Dialogue) {
            assert_eq!(Decoding::for_stage(stage).temperature, 0.0);
        }
        assert!(Stage::ALL.iter().all(|s| Decoding::for_stage(*s).top_p == 1.0));
    }

    #[test]
    fn request_validation() {
        assert!(ChatRequest::new(Stage::Goal, vec![]).is_err());
        let bad = Decoding { temperature: 2.5, top_p: 1.0, max_tokens: None };
        assert!(ChatRequest::with_decoding(Stage::Goal, vec![Message::user("x")], bad).is_err());
        let bad = Decoding { temperature: 0.0, top_p: 0.0, max_tokens: None };
        assert!(ChatRequest::with_decoding(Stage::Goal, vec![Message::user("x")], bad).is_err());
    }

    #[test]
    fn digest_depends_on_message_order_and_params() {
        let a = ChatRequest::new(
            Stage::Seed,
            vec![Message::user("a"), Message::assistant("b")],
        )
        .unwrap();
        let b = ChatRequest::new(
            Stage::Seed,
            vec![Message::assistant("b"), Message::user("a")],
        )
        .unwrap();
        assert_ne!(a.digest(), b.digest());
        let mut c = a.clone();
        c.temperature = 0.7;
        assert_ne!(a.digest(), c.digest());
        // the stage tag is bookkeeping only
        let mut d = a.clone();
        d.stage = Stage::Goal;
        assert_eq!(a.digest(), d.digest());
    }

    #[test]
    fn retries_transient_failures() {
        let client = LlmClient::new(Arc::new(Flaky { failures: Mutex::new(2) }))
            .with_retry(RetryPolicy::immediate(3));
        let r = client.complete(&req("x")).unwrap();
        assert_eq!(r.attempt_count, 3);
        assert!(!r.cached);
    }

    #[test]
    fn gives_up_after_cap() {
        let client = LlmClient::new(Arc::new(Flaky { failures: Mutex::new(5) }))
            .with_retry(RetryPolicy::immediate(3));
        assert!(matches!(
            client.complete(&req("x")),
            Err(LlmError::Exhausted { attempts: 3, .. })
        ));
    }

    #[test]
    fn second_identical_request_is_cached() {
        let client = LlmClient::new(Arc::new(Flaky { failures: Mutex::new(0) }));
        let first = client.complete(&req("x")).unwrap();
        let second = client.complete(&req("x")).unwrap();
        assert!(!first.cached);
        assert!(second.cached);
        assert_eq!(first.text, second.text);
        assert_eq!(client.stats().backend_calls, 1);
        assert_eq!(client.stats().cache_hits, 1);
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 10,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(500),
        };
        assert_eq!(p.delay(1), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(200));
        assert_eq!(p.delay(3), Duration::from_millis(400));
        assert_eq!(p.delay(4), Duration::from_millis(500));
    }
}
