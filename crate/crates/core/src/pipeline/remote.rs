//! Blocking client for OpenAI-compatible `/chat/completions` endpoints.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::config::RunConfig;
use super::provider::ProviderError;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteSettings {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_tokens: usize,
    pub timeout: Duration,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each further failure.
    pub backoff: Duration,
}

impl RemoteSettings {
    pub fn from_config(cfg: &RunConfig, temperature: f64) -> Result<RemoteSettings, ProviderError> {
        Ok(RemoteSettings {
            endpoint: cfg
                .endpoint
                .clone()
                .ok_or(ProviderError::Misconfigured("an endpoint URL (endpoint or ENDPOINT_URL)"))?,
            model: cfg
                .model
                .clone()
                .ok_or(ProviderError::Misconfigured("a model name (model)"))?,
            api_key: cfg.api_key.clone(),
            temperature,
            max_tokens: cfg.max_response_length,
            timeout: Duration::from_secs(cfg.request_timeout_secs),
            max_attempts: cfg.max_attempts.max(1),
            backoff: Duration::from_millis(cfg.backoff_ms),
        })
    }
}

#[derive(Debug)]
pub struct RemoteClient {
    settings: RemoteSettings,
    http: reqwest::blocking::Client,
    log: Option<Mutex<File>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    Retryable(ProviderError),
    Fatal(ProviderError),
}

impl RemoteClient {
    pub fn new(settings: RemoteSettings) -> Result<RemoteClient, ProviderError> {
        if settings.endpoint.is_empty() {
            return Err(ProviderError::Misconfigured("an endpoint URL"));
        }
        if settings.model.is_empty() {
            return Err(ProviderError::Misconfigured("a model name"));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| ProviderError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(RemoteClient {
            settings,
            http,
            log: None,
        })
    }

    /// Append every request and response to `path` as JSON lines.
    pub fn with_log(mut self, path: &Path) -> std::io::Result<RemoteClient> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.log = Some(Mutex::new(file));
        Ok(self)
    }

    pub fn settings(&self) -> &RemoteSettings {
        &self.settings
    }

    fn log(&self, entry: serde_json::Value) {
        if let Some(log) = &self.log {
            if let Ok(mut f) = log.lock() {
                if let Err(e) = writeln!(f, "{entry}") {
                    log::warn!("request log write failed: {e}");
                }
            }
        }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.settings.endpoint.trim_end_matches('/'))
    }

    fn attempt(&self, body: &serde_json::Value, attempt: u32) -> Result<Vec<String>, Failure> {
        let mut req = self.http.post(self.url()).json(body);
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let response = match req.send() {
            Ok(r) => r,
            Err(e) => {
                self.log(json!({"attempt": attempt, "request": body, "error": e.to_string()}));
                return Err(Failure::Retryable(ProviderError::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                }));
            }
        };
        let status = response.status();
        let text = response.text().unwrap_or_default();
        self.log(json!({"attempt": attempt, "request": body, "status": status.as_u16(), "response": text}));
        if !status.is_success() {
            let err = ProviderError::Http {
                status: status.as_u16(),
                attempts: attempt,
                message: text.chars().take(200).collect(),
            };
            return Err(if status.as_u16() == 429 || status.is_server_error() {
                Failure::Retryable(err)
            } else {
                Failure::Fatal(err)
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| Failure::Fatal(ProviderError::Malformed(e.to_string())))?;
        Ok(parsed
            .choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect())
    }

    fn request(&self, prompt: &str, n: usize) -> Result<Vec<String>, ProviderError> {
        let body = json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.settings.temperature,
            "n": n,
            "max_tokens": self.settings.max_tokens,
        });
        let mut delay = self.settings.backoff;
        let mut attempt = 1;
        loop {
            match self.attempt(&body, attempt) {
                Ok(choices) => return Ok(choices),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) if attempt >= self.settings.max_attempts => return Err(e),
                Err(Failure::Retryable(e)) => {
                    log::warn!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }

    /// `m` completions of `prompt`. Servers that return fewer choices than
    /// requested are asked again for the remainder.
    pub fn remote_rollout(&self, prompt: &str, m: usize) -> Result<Vec<String>, ProviderError> {
        let mut out = Vec::with_capacity(m);
        while out.len() < m {
            let got = self.request(prompt, m - out.len())?;
            if got.is_empty() {
                return Err(ProviderError::Malformed("response has no choices".into()));
            }
            out.extend(got);
        }
        out.truncate(m);
        Ok(out)
    }
}
