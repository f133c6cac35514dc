//! Live chat-completions backend.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendKind, SensorBackend, SensorError, SensorRequest};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "SEMCOST_LLM_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub timeout_s: f64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 1.0,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
            timeout_s: 30.0,
        }
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [Message<'a>; 2],
    temperature: f64,
    top_p: f64,
    frequency_penalty: f64,
    presence_penalty: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    /// Reads the token from [`API_KEY_ENV`].
    pub fn from_env(config: HttpConfig) -> Result<Self, SensorError> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| SensorError::Config(format!("{API_KEY_ENV} is not set")))?;
        Self::with_key(config, key)
    }

    pub fn with_key(config: HttpConfig, api_key: String) -> Result<Self, SensorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| SensorError::Config(e.to_string()))?;
        Ok(HttpBackend {
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl SensorBackend for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    fn complete(&mut self, request: &SensorRequest) -> Result<String, SensorError> {
        let body = ChatBody {
            model: &self.config.model,
            messages: [
                Message { role: "system", content: &request.system },
                Message { role: "user", content: &request.user },
            ],
            temperature: self.config.temperature,
            top_p: self.config.top_p,
            frequency_penalty: self.config.frequency_penalty,
            presence_penalty: self.config.presence_penalty,
        };
        let transport = |e: reqwest::Error| {
            if e.is_timeout() {
                SensorError::Timeout
            } else {
                SensorError::Transport(e.to_string())
            }
        };
        let resp = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(transport)?;
        let status = resp.status();
        let text = resp.text().map_err(transport)?;
        if !status.is_success() {
            return Err(SensorError::Transport(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| SensorError::Malformed {
            message: format!("chat response: {e}"),
            raw: text.clone(),
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or(SensorError::Malformed {
                message: "response has no message content".into(),
                raw: text,
            })
    }
}
