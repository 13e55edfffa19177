//! OpenAI-compatible chat-completions endpoint.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatProvider, ChatTurn, LlmError, Params};

/// The API key is read from this variable only; it is never logged.
pub const API_KEY_ENV: &str = "WITGEN_API_KEY";
pub const API_BASE_ENV: &str = "WITGEN_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4-turbo";

pub struct OpenAiProvider {
    base: String,
    key: String,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for OpenAiProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiProvider").field("base", &self.base).finish_non_exhaustive()
    }
}

impl OpenAiProvider {
    pub fn new(base: impl Into<String>, key: impl Into<String>, timeout: Duration) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(OpenAiProvider {
            base: base.into().trim_end_matches('/').to_string(),
            key: key.into(),
            http,
        })
    }

    pub fn from_env() -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| LlmError::MissingApiKey(API_KEY_ENV))?;
        let base = std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_API_BASE.to_string());
        Self::new(base, key, Duration::from_secs(600))
    }
}

pub(crate) fn request_body(model: &str, params: &Params, turns: &[ChatTurn]) -> Value {
    let mut body = json!({ "model": model, "messages": turns });
    if let Value::Object(map) = &mut body {
        for (k, v) in params {
            map.insert(k.clone(), v.clone());
        }
    }
    body
}

pub(crate) fn response_text(body: &Value) -> Result<String, LlmError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::BadResponse("no choices[0].message.content".into()))
}

impl ChatProvider for OpenAiProvider {
    fn complete(&self, model: &str, params: &Params, turns: &[ChatTurn]) -> Result<String, LlmError> {
        let resp = self
            .http
            .post(format!("{}/chat/completions", self.base))
            .bearer_auth(&self.key)
            .json(&request_body(model, params, turns))
            .send()
            .map_err(|e| LlmError::Transport(e.without_url().to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            let body: String = text.chars().take(500).collect();
            return Err(LlmError::Provider {
                status: status.as_u16(),
                body,
            });
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| LlmError::BadResponse(e.to_string()))?;
        response_text(&body)
    }
}
