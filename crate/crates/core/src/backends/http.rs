use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{BackendConfig, BackendError};
use crate::crosslingual::{Embedder, Translator};
use crate::dataset::{GenerationRequest, TextGenerator};
use crate::substitutability::{PromptTemplate, ScoringRequest, WordScorer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal POST-JSON transport, so clients can be exercised against canned
/// responses.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, String> {
        let mut req = self
            .client
            .post(url)
            .timeout(timeout)
            .header("content-type", "application/json")
            .body(serde_json::to_vec(body).map_err(|e| e.to_string())?);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Spaces calls at least `1 / rate` seconds apart across all threads
/// sharing the limiter.
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64) -> Self {
        assert!(requests_per_second > 0.0, "rate limit must be positive");
        Self {
            interval: Duration::from_secs_f64(1.0 / requests_per_second),
            next_slot: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        let slot = {
            let mut next = self.next_slot.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = match *next {
                Some(t) if t > now => t,
                _ => now,
            };
            *next = Some(slot + self.interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

struct Client {
    config: BackendConfig,
    transport: Arc<dyn Transport>,
    limiter: RateLimiter,
}

impl Client {
    fn new(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        config.validate()?;
        if config.endpoint.is_none() {
            return Err(BackendError::Config(format!(
                "backend {} has no endpoint",
                config.name
            )));
        }
        let limiter = RateLimiter::new(config.rate_limit);
        Ok(Self {
            config,
            transport,
            limiter,
        })
    }

    fn name(&self) -> &str {
        &self.config.name
    }

    fn model(&self) -> Value {
        self.config.model.clone().map_or(Value::Null, Value::String)
    }

    fn credential(&self) -> Result<Option<String>, BackendError> {
        match &self.config.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| BackendError::MissingCredential {
                backend: self.config.name.clone(),
                variable: var.clone(),
            }),
        }
    }

    fn decode_error(&self, message: impl Into<String>) -> BackendError {
        BackendError::Decode {
            backend: self.config.name.clone(),
            message: message.into(),
        }
    }

    /// POSTs with retries for transport errors, 429, and 5xx; other
    /// statuses fail immediately.
    fn call(&self, body: &Value) -> Result<Value, BackendError> {
        let url = self.config.endpoint.as_deref().expect("validated endpoint");
        let token = self.credential()?;
        let timeout = Duration::from_secs_f64(self.config.timeout_secs);
        let max_attempts = self.config.retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.acquire();
            let retryable = match self.transport.post_json(url, token.as_deref(), body, timeout) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    return serde_json::from_str(&resp.body)
                        .map_err(|e| self.decode_error(format!("invalid JSON: {e}")));
                }
                Ok(resp) if resp.status == 401 || resp.status == 403 => {
                    return Err(BackendError::Auth {
                        backend: self.config.name.clone(),
                        status: resp.status,
                        variable: self
                            .config
                            .api_key_env
                            .clone()
                            .unwrap_or_else(|| "(none configured)".into()),
                    });
                }
                Ok(resp) => {
                    let err = BackendError::Http {
                        backend: self.config.name.clone(),
                        status: resp.status,
                        attempts: attempt,
                        body: resp.body.chars().take(200).collect(),
                    };
                    if resp.status == 429 || resp.status >= 500 {
                        err
                    } else {
                        return Err(err);
                    }
                }
                Err(message) => BackendError::Transport {
                    backend: self.config.name.clone(),
                    attempts: attempt,
                    message,
                },
            };
            if attempt >= max_attempts {
                return Err(retryable);
            }
            log::warn!("{}: attempt {attempt} failed: {retryable}", self.name());
            let backoff = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(6));
            thread::sleep(Duration::from_millis(backoff));
        }
    }
}

/// Completions-style grader. Sends the rendered prompt followed by the
/// target word with `echo` and `logprobs` enabled and zero new tokens, then
/// sums the log-probabilities of the echoed tokens at or after the end of
/// the prompt. Responses are cached per request within a run.
pub struct HttpWordScorer {
    client: Client,
    template: PromptTemplate,
    cache: Mutex<HashMap<ScoringRequest, f64>>,
}

impl HttpWordScorer {
    pub fn new(
        config: BackendConfig,
        template: PromptTemplate,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, BackendError> {
        Ok(Self {
            client: Client::new(config, transport)?,
            template,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn target_log_prob(&self, response: &Value, answer_start: usize) -> Result<f64, BackendError> {
        let logprobs = response
            .pointer("/choices/0/logprobs")
            .ok_or_else(|| self.client.decode_error("missing choices[0].logprobs"))?;
        let values = logprobs
            .get("token_logprobs")
            .and_then(Value::as_array)
            .ok_or_else(|| self.client.decode_error("missing token_logprobs"))?;
        let offsets = logprobs
            .get("text_offset")
            .and_then(Value::as_array)
            .ok_or_else(|| self.client.decode_error("missing text_offset"))?;
        if offsets.len() != values.len() {
            return Err(self.client.decode_error("token_logprobs and text_offset lengths differ"));
        }
        let mut total = 0.0;
        let mut counted = 0;
        for (lp, off) in values.iter().zip(offsets) {
            let off = off
                .as_u64()
                .ok_or_else(|| self.client.decode_error("non-integer text_offset"))? as usize;
            if off < answer_start {
                continue;
            }
            let lp = lp
                .as_f64()
                .ok_or_else(|| self.client.decode_error("null log-probability on target token"))?;
            total += lp;
            counted += 1;
        }
        if counted == 0 {
            return Err(self.client.decode_error("no target tokens in echoed response"));
        }
        if !total.is_finite() || total > 0.0 {
            return Err(self.client.decode_error(format!("log-probability {total} out of range")));
        }
        Ok(total)
    }
}

impl WordScorer<f64> for HttpWordScorer {
    fn id(&self) -> &str {
        self.client.name()
    }

    fn log_prob(&self, request: &ScoringRequest) -> Result<f64, BackendError> {
        if let Some(&v) = self.cache.lock().expect("cache lock").get(request) {
            return Ok(v);
        }
        let prompt = self.template.render(request);
        // The answer is the target word after a single space.
        let answer_start = prompt.chars().count() + 1;
        let body = json!({
            "model": self.client.model(),
            "prompt": format!("{prompt} {}", request.target_word),
            "max_tokens": 0,
            "echo": true,
            "logprobs": 1,
            "temperature": 0,
        });
        let response = self.client.call(&body)?;
        let v = self.target_log_prob(&response, answer_start)?;
        self.cache.lock().expect("cache lock").insert(request.clone(), v);
        Ok(v)
    }
}

/// Chat-completions text generator (`n` completions per request).
pub struct HttpGenerator {
    client: Client,
}

impl HttpGenerator {
    pub fn new(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        Ok(Self {
            client: Client::new(config, transport)?,
        })
    }
}

impl TextGenerator for HttpGenerator {
    fn id(&self) -> &str {
        self.client.name()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        let body = json!({
            "model": self.client.model(),
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": request.temperature,
            "n": request.count,
        });
        let response = self.client.call(&body)?;
        let choices = response
            .get("choices")
            .and_then(Value::as_array)
            .ok_or_else(|| self.client.decode_error("missing choices"))?;
        let out: Vec<String> = choices
            .iter()
            .map(|c| {
                c.pointer("/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| self.client.decode_error("choice without message.content"))
            })
            .collect::<Result<_, _>>()?;
        if out.len() != request.count {
            return Err(self.client.decode_error(format!(
                "asked for {} completions, got {}",
                request.count,
                out.len()
            )));
        }
        Ok(out)
    }
}

/// Translation endpoint taking `{q, source, target, format}`. Accepts either
/// a flat `{translatedText}` response or the nested
/// `{data: {translations: [{translatedText}]}}` form.
pub struct HttpTranslator {
    client: Client,
}

impl HttpTranslator {
    pub fn new(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        Ok(Self {
            client: Client::new(config, transport)?,
        })
    }
}

impl Translator for HttpTranslator {
    fn id(&self) -> &str {
        self.client.name()
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, BackendError> {
        let body = json!({ "q": text, "source": source, "target": target, "format": "text" });
        let response = self.client.call(&body)?;
        let translated = response
            .get("translatedText")
            .or_else(|| response.pointer("/data/translations/0/translatedText"))
            .and_then(Value::as_str)
            .ok_or_else(|| self.client.decode_error("missing translatedText"))?;
        if translated.trim().is_empty() {
            return Err(self.client.decode_error("empty translation"));
        }
        Ok(translated.to_string())
    }
}

/// Embeddings endpoint (`{model, input}` → `data[0].embedding`).
pub struct HttpEmbedder {
    client: Client,
}

impl HttpEmbedder {
    pub fn new(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        Ok(Self {
            client: Client::new(config, transport)?,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        self.client.name()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let body = json!({ "model": self.client.model(), "input": text });
        let response = self.client.call(&body)?;
        let values = response
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| self.client.decode_error("missing data[0].embedding"))?;
        values
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| self.client.decode_error("non-numeric embedding")))
            .collect()
    }
}
