use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use tracing::warn;

use super::{whitespace_tokens, BackendConfig, BackendKind, Completion, ModelBackend};
use crate::error::{Error, Result};

/// Backend speaking the common chat-completion wire shape
/// (`POST {url}/chat/completions`).
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    temperature: f64,
    max_retries: u32,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl HttpBackend {
    pub fn new(config: &BackendConfig) -> Result<Self> {
        let url = config
            .url
            .as_deref()
            .ok_or_else(|| Error::Config("backend.url is required".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: format!("{}/chat/completions", url.trim_end_matches('/')),
            model: config.model.clone().unwrap_or_default(),
            temperature: config.temperature,
            max_retries: config.max_retries,
            api_key: config.api_key.clone(),
        })
    }

    fn attempt(&self, prompt: &str) -> std::result::Result<Completion, String> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: ChatResponse = response.json().map_err(|e| e.to_string())?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| "response has no choices".to_string())?;
        let (input_tokens, output_tokens) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (whitespace_tokens(prompt), whitespace_tokens(&text)),
        };
        Ok(Completion {
            text,
            input_tokens,
            output_tokens,
        })
    }
}

impl ModelBackend for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    fn complete(&self, stage: &str, prompt: &str) -> Result<Completion> {
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 << attempt.min(6)));
            }
            match self.attempt(prompt) {
                Ok(c) => return Ok(c),
                Err(e) => {
                    warn!(stage, attempt, error = %e, "chat completion failed");
                    last = e;
                }
            }
        }
        Err(Error::Transport(format!(
            "{stage}: giving up after {} attempts: {last}",
            self.max_retries + 1
        )))
    }
}
