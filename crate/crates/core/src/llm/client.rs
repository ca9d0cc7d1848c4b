use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{Completer, LlmConfig, LlmError, PromptBundle};

const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout,
    Other(String),
}

/// One HTTP POST with a bearer token. Returns status and body text.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<(u16, String), TransportFailure>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReqwestTransport;

static REQUESTS: std::sync::atomic::AtomicUsize = std::sync::atomic::AtomicUsize::new(0);

/// HTTP requests attempted through [`ReqwestTransport`] so far.
pub fn request_count() -> usize {
    REQUESTS.load(std::sync::atomic::Ordering::SeqCst)
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<(u16, String), TransportFailure> {
        REQUESTS.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportFailure::Other(e.to_string()))?;
        let resp = client.post(url).bearer_auth(bearer).json(body).send().map_err(|e| {
            if e.is_timeout() {
                TransportFailure::Timeout
            } else {
                TransportFailure::Other(e.without_url().to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| TransportFailure::Other(e.to_string()))?;
        Ok((status, text))
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    used: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut used = self.used.lock().unwrap_or_else(|p| p.into_inner());
        while *used >= self.cap {
            used = self.freed.wait(used).unwrap_or_else(|p| p.into_inner());
        }
        *used += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|p| p.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

/// OpenAI-compatible chat-completions client.
pub struct LlmClient {
    cfg: LlmConfig,
    transport: Box<dyn Transport>,
    backoff: Duration,
    gate: Gate,
    exchanges: Mutex<Vec<String>>,
}

impl LlmClient {
    pub fn new(cfg: LlmConfig, transport: Box<dyn Transport>) -> Self {
        let cap = cfg.max_in_flight.max(1);
        LlmClient {
            cfg,
            transport,
            backoff: Duration::from_millis(500),
            gate: Gate { used: Mutex::new(0), freed: Condvar::new(), cap },
            exchanges: Mutex::new(Vec::new()),
        }
    }

    /// Base delay between retries; doubles per attempt.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    /// Request/response records with the key value redacted.
    pub fn exchange_log(&self) -> Vec<String> {
        self.exchanges.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn request_body(&self, bundle: &PromptBundle) -> Value {
        json!({
            "model": self.cfg.model_id,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
            "messages": [
                { "role": "system", "content": bundle.system },
                { "role": "user", "content": bundle.user },
            ],
        })
    }

    fn record(&self, key: &str, entry: String) {
        let entry = redact(&entry, key);
        log::debug!("llm exchange: {entry}");
        self.exchanges.lock().unwrap_or_else(|p| p.into_inner()).push(entry);
    }

    /// Sends `bundle` and returns `choices[0].message.content`.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        let key = std::env::var(&self.cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::AuthFailed(format!("environment variable {} is not set", self.cfg.api_key_env)))?;
        let url = format!("{}/chat/completions", self.cfg.endpoint_url.trim_end_matches('/'));
        let body = self.request_body(bundle);
        let timeout = Duration::from_secs(self.cfg.request_timeout_secs.max(1));

        let _slot = self.gate.enter();
        let mut last = LlmError::TransportError("no attempt made".into());
        for attempt in 1..=MAX_ATTEMPTS {
            if attempt > 1 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 2));
            }
            self.record(&key, format!("request attempt={attempt} url={url} body={body}"));
            let (status, text) = match self.transport.post_json(&url, &key, &body, timeout) {
                Ok(r) => r,
                Err(TransportFailure::Timeout) => {
                    self.record(&key, format!("response attempt={attempt} timeout"));
                    last = LlmError::Timeout;
                    continue;
                }
                Err(TransportFailure::Other(e)) => {
                    self.record(&key, format!("response attempt={attempt} transport error: {e}"));
                    last = LlmError::TransportError(redact(&e, &key));
                    continue;
                }
            };
            self.record(&key, format!("response attempt={attempt} status={status} body={text}"));
            match status {
                200 => return parse_content(&text),
                401 | 403 => return Err(LlmError::AuthFailed(format!("HTTP {status}"))),
                429 => last = LlmError::RateLimited { attempts: attempt },
                s if s >= 500 => last = LlmError::TransportError(format!("HTTP {s}")),
                s => return Err(LlmError::TransportError(format!("HTTP {s}: {}", redact(&text, &key)))),
            }
        }
        Err(last)
    }
}

impl Completer for LlmClient {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        LlmClient::complete(self, bundle)
    }

    fn model_id(&self) -> String {
        self.cfg.model_id.clone()
    }
}

fn parse_content(text: &str) -> Result<String, LlmError> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| LlmError::MalformedResponse(format!("body is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
}

fn redact(text: &str, key: &str) -> String {
    if key.is_empty() {
        text.to_string()
    } else {
        text.replace(key, "[REDACTED]")
    }
}
