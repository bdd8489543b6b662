//! HTTP completion client for real model providers.
//!
//! Speaks the widely supported chat-completions JSON shape: POST
//! `{endpoint}` with `{model, messages, temperature}`, bearer-token
//! auth, token counts read from the `usage` object. Anything
//! provider-specific (function calling, multimodal input) is out of
//! scope; the inherent-search variant is routed through a
//! search-enabled model name where the provider offers one.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, GenerationRequest, GenerationResponse, ModelBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBackendConfig {
    /// Full completions URL, e.g. `https://api.example.com/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    300
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            BackendError::Config(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { config, api_key, client })
    }
}

#[derive(Debug, Deserialize)]
struct ChatCompletion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    content: String,
}

#[derive(Debug, Default, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Parses a chat-completion response body into a generation response.
pub fn parse_chat_completion(body: &str) -> Result<GenerationResponse, BackendError> {
    let completion: ChatCompletion = serde_json::from_str(body)
        .map_err(|e| BackendError::Transport(format!("malformed completion response: {e}")))?;
    let choice = completion
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Transport("completion response has no choices".into()))?;
    let usage = completion.usage.unwrap_or_default();
    Ok(GenerationResponse {
        text: choice.message.content,
        tokens_in: usage.prompt_tokens,
        tokens_out: usage.completion_tokens,
    })
}

impl ModelBackend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.context}],
            "temperature": request.temperature,
        });
        let response = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Transport(format!("provider returned {status}: {text}")));
        }
        parse_chat_completion(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_completion_with_usage() {
        let body = r#"{
            "choices": [{"message": {"role": "assistant", "content": "<<<42>>>"}, "finish_reason": "stop", "index": 0}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 3, "total_tokens": 14}
        }"#;
        let resp = parse_chat_completion(body).unwrap();
        assert_eq!(resp.text, "<<<42>>>");
        assert_eq!(resp.tokens_in, 11);
        assert_eq!(resp.tokens_out, 3);
    }

    #[test]
    fn missing_usage_defaults_to_zero() {
        let body = r#"{"choices": [{"message": {"content": "hi"}}]}"#;
        let resp = parse_chat_completion(body).unwrap();
        assert_eq!((resp.tokens_in, resp.tokens_out), (0, 0));
    }

    #[test]
    fn no_choices_is_transport_error() {
        let err = parse_chat_completion(r#"{"choices": []}"#).unwrap_err();
        assert!(err.is_retryable());
    }

    #[test]
    fn missing_key_env_is_config_error() {
        let config = HttpBackendConfig {
            endpoint: "https://example.invalid/v1/chat/completions".into(),
            model: "m".into(),
            api_key_env: "TUMIX_TEST_KEY_THAT_DOES_NOT_EXIST".into(),
            timeout_secs: 5,
        };
        assert!(matches!(HttpBackend::new(config), Err(BackendError::Config(_))));
    }
}
