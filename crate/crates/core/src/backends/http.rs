use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::{Annotator, AuthStyle, BackendConfig, BackendError, Completion, Request};

/// Client for OpenAI-style chat-completion endpoints.
pub struct HttpChatAnnotator {
    client: Client,
    url: String,
    model: String,
    key: Option<(AuthStyle, String)>,
    temperature: Option<f64>,
    system_message: bool,
    filter_markers: Vec<String>,
}

impl std::fmt::Debug for HttpChatAnnotator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatAnnotator")
            .field("url", &self.url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpChatAnnotator {
    /// Reads the API key from the configured environment variable; an unset
    /// variable is a configuration error.
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let url = cfg
            .endpoint_url
            .clone()
            .ok_or_else(|| BackendError::Config("http_chat needs endpoint_url".into()))?;
        let key = match &cfg.api_key_env {
            Some(var) => match std::env::var(var) {
                Ok(k) if !k.is_empty() => Some((cfg.auth_style, k)),
                _ => {
                    return Err(BackendError::Config(format!(
                        "environment variable {var} (API key) is not set"
                    )))
                }
            },
            None => None,
        };
        let client = Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(format!("HTTP client: {e}")))?;
        Ok(HttpChatAnnotator {
            client,
            url,
            model: cfg.model_name.clone(),
            key,
            temperature: cfg.temperature,
            system_message: cfg.system_message,
            filter_markers: cfg.content_filter_markers.clone(),
        })
    }

    fn body(&self, request: &Request<'_>) -> Value {
        let prompt = request.prompt;
        let messages = if self.system_message {
            json!([
                {"role": "system", "content": prompt.role_text},
                {"role": "user", "content": prompt.user_text},
            ])
        } else {
            json!([{"role": "user", "content": prompt.inline_text()}])
        };
        let mut body = json!({"model": self.model, "messages": messages});
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn filtered(&self, s: &str) -> bool {
        self.filter_markers.iter().any(|m| !m.is_empty() && s.contains(m.as_str()))
    }
}

fn excerpt(s: &str) -> String {
    const MAX: usize = 500;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}

impl Annotator for HttpChatAnnotator {
    fn id(&self) -> String {
        format!("http_chat:{}", self.model)
    }

    fn complete(&self, request: Request<'_>) -> Result<Completion, BackendError> {
        let mut req = self.client.post(&self.url).json(&self.body(&request));
        match &self.key {
            Some((AuthStyle::Bearer, k)) => req = req.bearer_auth(k),
            Some((AuthStyle::ApiKeyHeader, k)) => req = req.header("api-key", k),
            None => {}
        }
        let resp = req.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            if self.filtered(&text) {
                return Err(BackendError::ContentFiltered(excerpt(&text)));
            }
            return Err(BackendError::Http {
                status: status.as_u16(),
                body: excerpt(&text),
            });
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Transport(format!("response is not JSON: {e}")))?;
        let choice = &value["choices"][0];
        if let Some(reason) = choice["finish_reason"].as_str() {
            if self.filtered(reason) {
                return Err(BackendError::ContentFiltered(reason.to_string()));
            }
        }
        match choice["message"]["content"].as_str() {
            Some(content) => Ok(Completion::live(content)),
            None => Err(BackendError::Transport(format!(
                "no message content in response: {}",
                excerpt(&text)
            ))),
        }
    }
}
