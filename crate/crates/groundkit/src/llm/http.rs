//! Networked chat-completion client.
//!
//! Speaks the de-facto chat-completions wire shape so any hosted or local
//! model can serve as the annotator: `POST {endpoint}/chat/completions` with
//! a JSON body `{"model", "messages", "temperature", "max_tokens"}`, reading
//! the reply from `choices[0].message.content`.
//!
//! Retry policy: HTTP 429 and 5xx responses are retried with exponential
//! backoff (base 1s, factor 2, multiplicative jitter, 3 retries by default).
//! Other non-2xx statuses, timeouts, and transport failures are returned
//! immediately; a 2xx body missing the content path is a protocol error and
//! is never retried.
//!
//! The bearer credential is read from the [`API_KEY_ENV`] environment
//! variable at construction time — never from a flag — so secrets stay out
//! of shell history and process listings.

use std::time::Duration;

use rand::Rng;
use serde_json::Value;

use super::{ChatClient, ChatPrompt, LlmError};

/// Environment variable holding the bearer token sent as
/// `Authorization: Bearer …`. Requests are sent unauthenticated when unset.
pub const API_KEY_ENV: &str = "GROUNDKIT_LLM_API_KEY";

/// Connection and retry settings for [`HttpChatClient`].
#[derive(Debug, Clone)]
pub struct HttpClientConfig {
    /// Base URL, e.g. `https://api.example.com/v1`; the client appends
    /// `/chat/completions`.
    pub endpoint: String,
    pub model: String,
    /// Per-request timeout.
    pub timeout: Duration,
    /// Number of retries after the initial attempt for 429/5xx responses.
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub backoff_factor: f64,
    /// Scale each delay by a uniform factor in [0.5, 1.5) to avoid
    /// synchronized retry storms. Disable for deterministic tests.
    pub jitter: bool,
}

impl HttpClientConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpClientConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
            backoff_factor: 2.0,
            jitter: true,
        }
    }
}

/// Blocking HTTP implementation of [`ChatClient`].
pub struct HttpChatClient {
    config: HttpClientConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    /// Builds a client, reading the credential from [`API_KEY_ENV`].
    pub fn new(config: HttpClientConfig) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(HttpChatClient {
            config,
            api_key,
            http,
        })
    }

    fn url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.endpoint.trim_end_matches('/')
        )
    }

    fn backoff_delay(&self, attempt: u32) -> Duration {
        let base = self.config.backoff_base.as_secs_f64();
        let mut secs = base * self.config.backoff_factor.powi(attempt as i32);
        if self.config.jitter {
            secs *= rand::rng().random_range(0.5..1.5);
        }
        Duration::from_secs_f64(secs)
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, LlmError> {
        prompt.validate()?;
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": prompt.messages,
            "temperature": prompt.temperature,
            "max_tokens": prompt.max_tokens,
        });
        let url = self.url();
        let mut attempt = 0u32;
        loop {
            let mut request = self.http.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
            let response = match request.send() {
                Ok(r) => r,
                Err(e) if e.is_timeout() => {
                    return Err(LlmError::Timeout {
                        seconds: self.config.timeout.as_secs_f64(),
                    });
                }
                Err(e) => return Err(LlmError::Transport(e.to_string())),
            };
            let status = response.status().as_u16();
            if status == 429 || (500..600).contains(&status) {
                if attempt >= self.config.max_retries {
                    return Err(if status == 429 {
                        LlmError::RateLimited {
                            attempts: attempt + 1,
                        }
                    } else {
                        LlmError::ServerError {
                            status,
                            attempts: attempt + 1,
                        }
                    });
                }
                let delay = self.backoff_delay(attempt);
                log::warn!("chat endpoint returned HTTP {status}; retrying in {delay:?}");
                std::thread::sleep(delay);
                attempt += 1;
                continue;
            }
            if !(200..300).contains(&status) {
                return Err(LlmError::HttpStatus { status });
            }
            let value: Value = response
                .json()
                .map_err(|e| LlmError::Protocol(format!("response is not JSON: {e}")))?;
            return extract_content(&value);
        }
    }
}

fn extract_content(value: &Value) -> Result<String, LlmError> {
    value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| LlmError::Protocol("missing choices[0].message.content".into()))
}
