use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, Completion, LlmError, PromptRequest, SharedBackend, TokenUsage};

/// OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL; `/chat/completions` is appended unless already present.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token. Unset means no auth header.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    /// Retries after the first failed attempt.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_secs() -> f64 {
    super::default_timeout().as_secs_f64()
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

impl RemoteConfig {
    pub fn new(endpoint: &str, model: &str) -> Self {
        RemoteConfig {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            auth_env: None,
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.endpoint.trim().is_empty() {
            return Err(LlmError::Config("remote backend needs an endpoint".into()));
        }
        if self.model.trim().is_empty() {
            return Err(LlmError::Config("remote backend needs a model".into()));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(LlmError::Config("timeout must be positive".into()));
        }
        Ok(())
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    cfg: RemoteConfig,
    client: Arc<OnceLock<Result<reqwest::blocking::Client, String>>>,
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Self {
        RemoteBackend {
            cfg,
            client: Arc::new(OnceLock::new()),
        }
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, LlmError> {
        self.client
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs_f64(self.cfg.timeout_secs))
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| LlmError::Transport(e.clone()))
    }

    fn token(&self) -> Result<Option<String>, LlmError> {
        match &self.cfg.auth_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| LlmError::Auth(format!("environment variable {var} is not set"))),
        }
    }

    /// One HTTP exchange asking for `n` choices.
    fn call(&self, req: &PromptRequest, n: usize, token: Option<&str>) -> Result<(Vec<String>, TokenUsage), Attempt> {
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": req.rendered_text}],
            "temperature": req.temperature,
            "top_p": req.top_p,
            "n": n,
        });
        let client = self.client().map_err(Attempt::Fatal)?;
        let mut builder = client.post(self.cfg.url()).json(&body);
        if let Some(t) = token {
            builder = builder.bearer_auth(t);
        }
        let resp = builder
            .send()
            .map_err(|e| Attempt::Retry(LlmError::Transport(e.to_string())))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Attempt::Fatal(LlmError::Auth(format!("HTTP {status}"))));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(LlmError::Transport(format!("HTTP {status}"))));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Attempt::Fatal(LlmError::Protocol(format!("HTTP {status}: {text}"))));
        }
        let v: Value = resp
            .json()
            .map_err(|e| Attempt::Retry(LlmError::Protocol(e.to_string())))?;
        let choices = v["choices"]
            .as_array()
            .ok_or_else(|| Attempt::Fatal(LlmError::Protocol("response has no choices".into())))?;
        let texts = choices
            .iter()
            .map(|c| c["message"]["content"].as_str().unwrap_or_default().to_string())
            .collect();
        let usage = TokenUsage {
            prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        Ok((texts, usage))
    }

    fn call_with_retries(
        &self,
        req: &PromptRequest,
        n: usize,
        token: Option<&str>,
    ) -> Result<(Vec<String>, TokenUsage), LlmError> {
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.call(req, n, token) {
                Ok(r) => return Ok(r),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    if attempt >= self.cfg.retries {
                        return Err(match e {
                            LlmError::Transport(m) => {
                                LlmError::Transport(format!("{m} (after {} attempts)", attempt + 1))
                            }
                            other => other,
                        });
                    }
                    log::warn!("{}: attempt {} failed: {e}; retrying in {delay:?}", req.template_id, attempt + 1);
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, req: &PromptRequest) -> Result<Vec<Completion>, LlmError> {
        req.validate()?;
        let token = self.token()?;
        let mut texts: Vec<String> = Vec::with_capacity(req.n_samples);
        let mut usage = TokenUsage::default();
        // Some servers ignore `n`; top up with further requests.
        let mut rounds = 0;
        while texts.len() < req.n_samples {
            let (got, u) = self.call_with_retries(req, req.n_samples - texts.len(), token.as_deref())?;
            usage.add(u);
            if got.is_empty() {
                return Err(LlmError::Protocol("response has no choices".into()));
            }
            texts.extend(got);
            rounds += 1;
            if rounds > req.n_samples {
                return Err(LlmError::Protocol("server keeps returning too few choices".into()));
            }
        }
        texts.truncate(req.n_samples);
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(LlmError::BackendRefusal(format!("{} (empty completion)", req.template_id)));
        }
        Ok(texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| Completion {
                text,
                sample_index: i,
                usage: (i == 0).then_some(usage),
            })
            .collect())
    }

    fn fork_session(&self) -> SharedBackend {
        Arc::new(self.clone())
    }

    fn describe(&self) -> String {
        format!("remote {} ({})", self.cfg.url(), self.cfg.model)
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::time::Instant;

    use super::*;
    use crate::llm::{Sampling, TemplateId};

    fn req(n: usize) -> PromptRequest {
        PromptRequest::new(TemplateId::Cot, "hello".into(), Sampling::TASK2, n)
    }

    /// Serves the given canned HTTP responses, one per connection, and
    /// returns the request bodies it saw.
    fn mock_server(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            bodies
        });
        (addr, handle)
    }

    fn choices(texts: &[&str]) -> String {
        let cs: Vec<Value> = texts
            .iter()
            .map(|t| json!({"index": 0, "message": {"role": "assistant", "content": t}}))
            .collect();
        json!({"choices": cs, "usage": {"prompt_tokens": 5, "completion_tokens": 7}}).to_string()
    }

    #[test]
    fn unreachable_endpoint_is_transport_error_after_retries() {
        // Bind then drop to get a port with nothing listening.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut cfg = RemoteConfig::new(&format!("http://127.0.0.1:{port}"), "m");
        cfg.retries = 2;
        cfg.backoff_ms = 10;
        let started = Instant::now();
        let err = RemoteBackend::new(cfg).complete(&req(1)).unwrap_err();
        match err {
            LlmError::Transport(m) => assert!(m.contains("after 3 attempts"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(started.elapsed() >= Duration::from_millis(30));
    }

    #[test]
    fn wire_format_and_top_up() {
        let (addr, handle) = mock_server(vec![(200, choices(&["a", "b"])), (200, choices(&["c"]))]);
        let b = RemoteBackend::new(RemoteConfig::new(&addr, "test-model"));
        let out = b.complete(&req(3)).unwrap();
        assert_eq!(out.iter().map(|c| c.text.as_str()).collect::<Vec<_>>(), vec!["a", "b", "c"]);
        assert_eq!(out[0].usage.unwrap().total(), 24);
        assert!(out[1].usage.is_none());
        let bodies = handle.join().unwrap();
        let first: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(first["model"], "test-model");
        assert_eq!(first["n"], 3);
        assert_eq!(first["top_p"], 0.95);
        assert_eq!(first["messages"][0]["content"], "hello");
        let second: Value = serde_json::from_str(&bodies[1]).unwrap();
        assert_eq!(second["n"], 1);
    }

    #[test]
    fn unauthorized_is_auth_error_without_retry() {
        let (addr, handle) = mock_server(vec![(401, "{}".into())]);
        let mut cfg = RemoteConfig::new(&addr, "m");
        cfg.retries = 5;
        let err = RemoteBackend::new(cfg).complete(&req(1)).unwrap_err();
        assert!(matches!(err, LlmError::Auth(_)));
        assert_eq!(handle.join().unwrap().len(), 1);
    }

    #[test]
    fn server_error_then_success() {
        let (addr, handle) = mock_server(vec![(500, "{}".into()), (200, choices(&["ok"]))]);
        let mut cfg = RemoteConfig::new(&addr, "m");
        cfg.backoff_ms = 1;
        let out = RemoteBackend::new(cfg).complete(&req(1)).unwrap();
        assert_eq!(out[0].text, "ok");
        handle.join().unwrap();
    }

    #[test]
    fn missing_token_variable() {
        let mut cfg = RemoteConfig::new("http://127.0.0.1:9", "m");
        cfg.auth_env = Some("SOPPLAN_TEST_SURELY_UNSET_VAR".into());
        assert!(matches!(RemoteBackend::new(cfg).complete(&req(1)), Err(LlmError::Auth(_))));
    }

    #[test]
    fn empty_completion_is_refusal() {
        let (addr, handle) = mock_server(vec![(200, choices(&[""]))]);
        let err = RemoteBackend::new(RemoteConfig::new(&addr, "m")).complete(&req(1)).unwrap_err();
        assert!(matches!(err, LlmError::BackendRefusal(_)));
        handle.join().unwrap();
    }
}
