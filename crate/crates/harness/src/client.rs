//! Chat-completion client for OpenAI-compatible endpoints.

use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::prompts::PromptSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RetrieverConfig {
    #[default]
    None,
    /// Document-frequency weighted token overlap; no network.
    Lexical { k: usize },
    /// Vectors from the endpoint's `/embeddings` route.
    Embedding { k: usize },
}

impl RetrieverConfig {
    pub fn k(&self) -> Option<usize> {
        match *self {
            RetrieverConfig::None => None,
            RetrieverConfig::Lexical { k } | RetrieverConfig::Embedding { k } => Some(k),
        }
    }
}

fn default_temperature() -> f64 {
    0.1
}
fn default_max_tokens() -> u32 {
    2048
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_timeout() -> u64 {
    120
}

/// Model endpoint settings, usually loaded from TOML. The API key itself is
/// never stored; `api_key_env` names the variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Base URL, e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub retriever: RetrieverConfig,
    #[serde(default)]
    pub embedding_model: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

impl ModelConfig {
    pub fn new(endpoint: &str, model: &str) -> ModelConfig {
        ModelConfig {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key_env: None,
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            retriever: RetrieverConfig::None,
            embedding_model: None,
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            timeout_s: default_timeout(),
        }
    }

    pub fn from_toml(text: &str) -> Result<ModelConfig, ClientError> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| ClientError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ModelConfig, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        ModelConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ClientError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(ClientError::Config("max_tokens must be positive".into()));
        }
        if let Some(k) = self.retriever.k() {
            if !(1..=3).contains(&k) {
                return Err(ClientError::Config(format!("retriever k must be in 1..=3, got {k}")));
            }
        }
        Ok(())
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{route}", self.endpoint.trim_end_matches('/'))
    }

    fn api_key(&self) -> Result<Option<String>, ClientError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| ClientError::Auth(format!("environment variable {var} is not set"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, prompt: &PromptSpec) -> Result<String, ClientError>;

    /// Label used in report tables.
    fn name(&self) -> &str;
}

fn redact(key: &str) -> String {
    if key.len() <= 8 {
        "****".to_string()
    } else {
        format!("{}****", &key[..3])
    }
}

pub struct HttpModel {
    cfg: ModelConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(Value),
    Retry(ClientError),
}

impl HttpModel {
    pub fn new(cfg: ModelConfig) -> Result<HttpModel, ClientError> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s)))
            .build()
            .new_agent();
        Ok(HttpModel { cfg, agent })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn attempt(&self, url: &str, key: Option<&str>, body: &Value) -> Result<Attempt, ClientError> {
        let mut req = self.agent.post(url);
        if let Some(k) = key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(ClientError::Transport(e.to_string()))),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        log::debug!("{url} -> {status} ({} bytes)", text.len());
        match status {
            200..=299 => serde_json::from_str(&text)
                .map(Attempt::Done)
                .map_err(|e| ClientError::Protocol(format!("invalid JSON body: {e}"))),
            401 | 403 => Err(ClientError::Auth(format!("status {status}"))),
            429 => Ok(Attempt::Retry(ClientError::RateLimited { attempts: 0 })),
            500..=599 => Ok(Attempt::Retry(ClientError::Transport(format!("server returned status {status}")))),
            _ => Err(ClientError::Protocol(format!("status {status}: {}", text.chars().take(200).collect::<String>()))),
        }
    }

    /// POSTs `body` to `route`, retrying 429, 5xx and connection failures
    /// up to `max_retries` times with doubling delays.
    pub fn post(&self, route: &str, body: &Value) -> Result<Value, ClientError> {
        let url = self.cfg.url(route);
        let key = self.cfg.api_key()?;
        log::debug!(
            "POST {url} model={} key={}",
            self.cfg.model,
            key.as_deref().map(redact).unwrap_or_else(|| "none".into())
        );
        let mut attempt = 0;
        loop {
            let err = match self.attempt(&url, key.as_deref(), body)? {
                Attempt::Done(v) => return Ok(v),
                Attempt::Retry(e) => e,
            };
            if attempt == self.cfg.max_retries {
                return Err(match err {
                    ClientError::RateLimited { .. } => ClientError::RateLimited { attempts: attempt + 1 },
                    e => e,
                });
            }
            let delay = self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16));
            log::warn!("{url}: {err}; retrying in {delay} ms");
            thread::sleep(Duration::from_millis(delay));
            attempt += 1;
        }
    }

    /// Embeds `inputs` with `embedding_model` (falls back to `model`).
    pub fn embed(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        let model = self.cfg.embedding_model.as_deref().unwrap_or(&self.cfg.model);
        let v = self.post("embeddings", &json!({ "model": model, "input": inputs }))?;
        let data = v["data"].as_array().ok_or_else(|| ClientError::Protocol("missing `data` array".into()))?;
        let mut out = vec![Vec::new(); inputs.len()];
        for (i, item) in data.iter().enumerate() {
            let idx = item["index"].as_u64().map(|x| x as usize).unwrap_or(i);
            let vec = item["embedding"]
                .as_array()
                .ok_or_else(|| ClientError::Protocol("missing `embedding`".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| ClientError::Protocol("non-numeric embedding".into())))
                .collect::<Result<Vec<f64>, _>>()?;
            *out.get_mut(idx).ok_or_else(|| ClientError::Protocol(format!("embedding index {idx} out of range")))? = vec;
        }
        if out.iter().any(|v| v.is_empty()) {
            return Err(ClientError::Protocol("fewer embeddings than inputs".into()));
        }
        Ok(out)
    }
}

impl ChatModel for HttpModel {
    fn complete(&self, prompt: &PromptSpec) -> Result<String, ClientError> {
        let body = json!({
            "model": self.cfg.model,
            "messages": prompt.messages(),
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        let v = self.post("chat/completions", &body)?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Protocol("no choices[0].message.content".into()))
    }

    fn name(&self) -> &str {
        &self.cfg.model
    }
}
