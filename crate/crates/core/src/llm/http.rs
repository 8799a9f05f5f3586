use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, BackendError, ChatRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL up to and excluding `/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    120
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4-turbo".into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
        }
    }
}

/// OpenAI-compatible chat-completions backend.
pub struct HttpBackend {
    config: HttpConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    /// Reads the token from `config.api_key_env`; a missing variable is
    /// allowed for endpoints that need no auth.
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let token = std::env::var(&config.api_key_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Fatal(format!("http client: {e}")))?;
        Ok(Self { config, token, client })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "top_p": request.top_p,
        });
        if let Some(max) = request.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let mut call = self.client.post(self.url()).json(&body);
        if let Some(token) = &self.token {
            call = call.bearer_auth(token);
        }
        let resp = call
            .send()
            .map_err(|e| BackendError::Transient(format!("transport: {e}")))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Transient(format!("http {status}")));
        }
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            return Err(BackendError::Fatal(format!("http {status}: {detail}")));
        }
        let parsed: Completion = resp
            .json()
            .map_err(|e| BackendError::Fatal(format!("malformed completion: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| BackendError::Fatal("completion has no content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmClient, Message, RetryPolicy, Stage};
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;

    fn serve(responses: Vec<(u16, &'static str)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(idx) = text.find("\r\n\r\n") {
                        let len = text[..idx]
                            .lines()
                            .find_map(|l| {
                                l.to_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= idx + 4 + len {
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                seen.push(String::from_utf8_lossy(&buf).into_owned());
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            seen
        });
        (format!("http://{addr}/v1"), handle)
    }

    #[test]
    fn posts_chat_completion_and_retries_503() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"{\"is_reasonable\": 1}"}}]}"#;
        let (url, handle) = serve(vec![(503, "{}"), (200, ok)]);
        let backend = HttpBackend::new(HttpConfig {
            base_url: url,
            model: "test-model".into(),
            api_key_env: "DSTAUG_TEST_UNSET_KEY".into(),
            timeout_secs: 5,
        })
        .unwrap();
        let client = LlmClient::new(Arc::new(backend)).with_retry(RetryPolicy::immediate(3));
        let req = ChatRequest::new(Stage::Judge, vec![Message::user("hi")]).unwrap();
        let resp = client.complete(&req).unwrap();
        assert_eq!(resp.text, "{\"is_reasonable\": 1}");
        assert_eq!(resp.attempt_count, 2);
        let seen = handle.join().unwrap();
        assert!(seen[1].starts_with("POST /v1/chat/completions"));
        assert!(seen[1].contains("\"model\":\"test-model\""));
        assert!(seen[1].contains("\"top_p\":1.0"));
    }

    #[test]
    fn client_errors_are_fatal() {
        let (url, handle) = serve(vec![(400, r#"{"error":"bad"}"#)]);
        let backend = HttpBackend::new(HttpConfig {
            base_url: url,
            model: "m".into(),
            api_key_env: "DSTAUG_TEST_UNSET_KEY".into(),
            timeout_secs: 5,
        })
        .unwrap();
        let req = ChatRequest::new(Stage::Judge, vec![Message::user("hi")]).unwrap();
        assert!(matches!(backend.complete(&req), Err(BackendError::Fatal(_))));
        handle.join().unwrap();
    }
}
