//! Thin blocking client for a completion endpoint.
//!
//! This is the only network-touching path in the crate. The wire format is
//! the common chat-completion JSON shape: request
//! `{"model": ..., "messages": [{"role": "user", "content": prompt}],
//! "temperature": 0}` and response `choices[0].message.content` (falling
//! back to `choices[0].text` for plain completion servers). Everything else
//! in the pipeline is offline; callers fall back to scenario-supplied
//! directives when this fails.

use std::time::Duration;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key; empty = no auth.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8080/v1/chat/completions".to_string(),
            model: "gpt-3.5-turbo".to_string(),
            api_key_env: "OFFNAV_API_KEY".to_string(),
            timeout_secs: 30.0,
            max_retries: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request timed out after {0} s")]
    Timeout(f64),
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("endpoint returned status {status}: {body}")]
    NonSuccessStatus { status: u16, body: String },
    #[error("response is not a recognizable completion payload: {0}")]
    MalformedResponse(String),
}

fn extract_completion(body: &str) -> Result<String, LlmError> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let choice = &v["choices"][0];
    if let Some(text) = choice["message"]["content"].as_str() {
        return Ok(text.to_string());
    }
    if let Some(text) = choice["text"].as_str() {
        return Ok(text.to_string());
    }
    Err(LlmError::MalformedResponse(body.chars().take(200).collect()))
}

/// One blocking completion call. Transport errors and timeouts are retried
/// up to `max_retries` additional attempts; non-success statuses are not.
pub fn request_completion(prompt: &str, endpoint: &EndpointConfig) -> Result<String, LlmError> {
    if endpoint.timeout_secs <= 0.0 {
        return Err(LlmError::Timeout(endpoint.timeout_secs));
    }
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
        .build();
    let payload = json!({
        "model": endpoint.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
    });
    let api_key = if endpoint.api_key_env.is_empty() {
        None
    } else {
        std::env::var(&endpoint.api_key_env).ok()
    };

    let mut last_err = None;
    for _ in 0..=endpoint.max_retries {
        let mut req = agent.post(&endpoint.base_url).set("Content-Type", "application/json");
        if let Some(key) = &api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(payload.clone()) {
            Ok(resp) => {
                let body = resp
                    .into_string()
                    .map_err(|e| LlmError::TransportError(e.to_string()))?;
                return extract_completion(&body);
            }
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                return Err(LlmError::NonSuccessStatus { status, body });
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                last_err = Some(if msg.contains("timed out") || msg.contains("timeout") {
                    LlmError::Timeout(endpoint.timeout_secs)
                } else {
                    LlmError::TransportError(msg)
                });
            }
        }
    }
    Err(last_err.unwrap_or_else(|| LlmError::TransportError("no attempts made".into())))
}
