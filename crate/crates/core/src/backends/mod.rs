//! Annotator backends and the retry-until-acceptable loop.
//!
//! A [`Backend`] wraps a primary [`Annotator`] and an optional fallback that
//! takes over when the primary refuses a prompt on content-policy grounds.
//! [`annotate`] drives one prompt to an accepted [`Judgment`](crate::parsing::Judgment);
//! [`run_batch`] does the same for a whole list of prompts with bounded
//! concurrency.

mod http;
mod replay;
mod runner;
mod simulated;
mod transcript;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::PromptBundle;

pub use http::HttpChatAnnotator;
pub use replay::{ReplayAnnotator, ResumingAnnotator};
pub use runner::{
    annotate, run_batch, run_batch_with, run_tuple_set, BatchResult, BatchStats, RateLimiter, RawResponse,
    TupleFailure, TupleOutcome,
};
pub use simulated::{SimulatedAnnotator, SimulatedAnnotatorConfig};
pub use transcript::{read_transcript, TranscriptLog, TranscriptRecord};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("content filter rejected the prompt: {0}")]
    ContentFiltered(String),
    #[error("no recorded response for tuple {tuple_index}, attempt {attempt}")]
    MissingResponse { tuple_index: usize, attempt: u32 },
    #[error("recorded prompt for tuple {tuple_index} differs (hash {recorded} vs {current})")]
    PromptMismatch {
        tuple_index: usize,
        recorded: String,
        current: String,
    },
    #[error("transcript {path}: {message}")]
    Transcript { path: PathBuf, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl BackendError {
    /// Errors worth another attempt (as opposed to configuration or replay gaps).
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::Transport(_) | BackendError::Http { .. } | BackendError::ContentFiltered(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    #[default]
    Simulated,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AuthStyle {
    /// `Authorization: Bearer <key>`
    #[default]
    Bearer,
    /// `api-key: <key>`
    ApiKeyHeader,
}

fn default_max_retries() -> u32 {
    5
}
fn default_max_in_flight() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    1000
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_true() -> bool {
    true
}
fn default_filter_markers() -> Vec<String> {
    vec!["content_filter".into(), "ResponsibleAIPolicyViolation".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub auth_style: AuthStyle,
    #[serde(default)]
    pub temperature: Option<f64>,
    /// Upper bound on attempts per prompt (first try included).
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub fallback: Option<Box<BackendConfig>>,
    /// Requests per second.
    #[serde(default)]
    pub rate_limit: Option<f64>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Base delay before retrying a transport error; doubles per attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Send the role sentence as a system message instead of inlining it.
    #[serde(default = "default_true")]
    pub system_message: bool,
    /// Substrings in an error body or finish reason that mark a content-filter refusal.
    #[serde(default = "default_filter_markers")]
    pub content_filter_markers: Vec<String>,
    /// Transcript consumed by the replay backend.
    #[serde(default)]
    pub transcript_path: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Simulated,
            endpoint_url: None,
            model_name: "simulated".into(),
            api_key_env: None,
            auth_style: AuthStyle::Bearer,
            temperature: None,
            max_retries: default_max_retries(),
            fallback: None,
            rate_limit: None,
            max_in_flight: default_max_in_flight(),
            backoff_base_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
            system_message: true,
            content_filter_markers: default_filter_markers(),
            transcript_path: None,
        }
    }
}

impl BackendConfig {
    pub fn simulated() -> Self {
        BackendConfig::default()
    }

    pub fn replay(path: impl Into<PathBuf>) -> Self {
        BackendConfig {
            kind: BackendKind::Replay,
            model_name: "replay".into(),
            transcript_path: Some(path.into()),
            ..BackendConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_retries < 1 {
            return Err(BackendError::Config("max_retries must be ≥ 1".into()));
        }
        if self.max_in_flight < 1 {
            return Err(BackendError::Config("max_in_flight must be ≥ 1".into()));
        }
        if let Some(r) = self.rate_limit {
            if !(r > 0.0 && r.is_finite()) {
                return Err(BackendError::Config(format!("rate_limit must be > 0, got {r}")));
            }
        }
        if let Some(t) = self.temperature {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(BackendError::Config(format!("temperature must be ≥ 0, got {t}")));
            }
        }
        match self.kind {
            BackendKind::HttpChat => {
                if self.endpoint_url.as_deref().is_none_or(str::is_empty) {
                    return Err(BackendError::Config("http_chat needs endpoint_url".into()));
                }
                if self.model_name.is_empty() {
                    return Err(BackendError::Config("http_chat needs model_name".into()));
                }
            }
            BackendKind::Replay => {
                if self.transcript_path.is_none() {
                    return Err(BackendError::Config("replay needs transcript_path".into()));
                }
            }
            BackendKind::Simulated => {}
        }
        if let Some(fb) = &self.fallback {
            fb.validate()?;
        }
        Ok(())
    }

    /// A short identifier recorded with every response.
    pub fn backend_id(&self) -> String {
        let kind = match self.kind {
            BackendKind::HttpChat => "http_chat",
            BackendKind::Simulated => "simulated",
            BackendKind::Replay => "replay",
        };
        if self.model_name.is_empty() {
            kind.to_string()
        } else {
            format!("{kind}:{}", self.model_name)
        }
    }
}

/// One request to an annotator.
#[derive(Debug, Clone, Copy)]
pub struct Request<'a> {
    pub prompt: &'a PromptBundle,
    /// Position of the prompt in its batch; keys simulator randomness and replay lookups.
    pub tuple_index: usize,
    /// 1-based attempt number for this prompt.
    pub attempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// A fresh answer from the annotator.
    Live,
    /// Read from a transcript by the replay backend; logged again in the new run.
    Replayed,
    /// Read back from this run's own transcript while resuming; already logged.
    Resumed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub source: Source,
}

impl Completion {
    pub fn live(text: impl Into<String>) -> Self {
        Completion {
            text: text.into(),
            source: Source::Live,
        }
    }
}

/// Anything that maps a rendered prompt to raw answer text.
pub trait Annotator: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: Request<'_>) -> Result<Completion, BackendError>;

    /// `Some` when `request` will be answered from a record rather than a
    /// live call (no rate limit or backoff applies).
    fn recorded_source(&self, _request: Request<'_>) -> Option<Source> {
        None
    }
}

struct Endpoint {
    annotator: Box<dyn Annotator>,
    limiter: Option<RateLimiter>,
}

/// A configured primary annotator plus retry, rate-limit and fallback policy.
pub struct Backend {
    primary: Endpoint,
    fallback: Option<Endpoint>,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub backoff_base: Duration,
}

impl Backend {
    pub fn new(annotator: Box<dyn Annotator>) -> Self {
        Backend {
            primary: Endpoint {
                annotator,
                limiter: None,
            },
            fallback: None,
            max_retries: default_max_retries(),
            max_in_flight: default_max_in_flight(),
            backoff_base: Duration::from_millis(default_backoff_ms()),
        }
    }

    pub fn with_fallback(mut self, annotator: Box<dyn Annotator>, rate_limit: Option<f64>) -> Self {
        self.fallback = Some(Endpoint {
            annotator,
            limiter: rate_limit.map(RateLimiter::new),
        });
        self
    }

    pub fn with_rate_limit(mut self, rps: f64) -> Self {
        self.primary.limiter = Some(RateLimiter::new(rps));
        self
    }

    pub fn with_max_retries(mut self, n: u32) -> Self {
        self.max_retries = n;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n;
        self
    }

    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    /// Builds the backend described by `cfg`. `simulator` supplies the
    /// simulated annotator's settings (primary or fallback).
    ///
    /// Fails before any network traffic if an API key variable is unset.
    pub fn from_config(
        cfg: &BackendConfig,
        simulator: Option<&SimulatedAnnotatorConfig>,
    ) -> Result<Self, BackendError> {
        cfg.validate()?;
        let primary = build_annotator(cfg, simulator)?;
        let mut backend = Backend::new(primary)
            .with_max_retries(cfg.max_retries)
            .with_max_in_flight(cfg.max_in_flight)
            .with_backoff(Duration::from_millis(cfg.backoff_base_ms));
        if let Some(rps) = cfg.rate_limit {
            backend = backend.with_rate_limit(rps);
        }
        if let Some(fb) = &cfg.fallback {
            let annotator = build_annotator(fb, simulator)?;
            backend = backend.with_fallback(annotator, fb.rate_limit);
        }
        Ok(backend)
    }

    /// Answers attempts already present in `records` from the record and
    /// sends only the rest to the annotators.
    pub fn resuming(mut self, records: &[TranscriptRecord]) -> Self {
        self.primary.annotator = Box::new(ResumingAnnotator::new(
            self.primary.annotator,
            records.iter().filter(|r| !r.from_fallback).cloned(),
        ));
        if let Some(fb) = self.fallback.as_mut() {
            let inner = std::mem::replace(&mut fb.annotator, Box::new(Unavailable));
            fb.annotator = Box::new(ResumingAnnotator::new(
                inner,
                records.iter().filter(|r| r.from_fallback).cloned(),
            ));
        }
        self
    }

    pub fn primary_id(&self) -> String {
        self.primary.annotator.id()
    }

    pub fn has_fallback(&self) -> bool {
        self.fallback.is_some()
    }
}

struct Unavailable;

impl Annotator for Unavailable {
    fn id(&self) -> String {
        "unavailable".into()
    }
    fn complete(&self, _request: Request<'_>) -> Result<Completion, BackendError> {
        Err(BackendError::Config("annotator unavailable".into()))
    }
}

fn build_annotator(
    cfg: &BackendConfig,
    simulator: Option<&SimulatedAnnotatorConfig>,
) -> Result<Box<dyn Annotator>, BackendError> {
    Ok(match cfg.kind {
        BackendKind::HttpChat => Box::new(HttpChatAnnotator::from_config(cfg)?),
        BackendKind::Simulated => {
            let sim = simulator.ok_or_else(|| {
                BackendError::Config("simulated backend needs a [simulator] section".into())
            })?;
            Box::new(SimulatedAnnotator::new(sim.clone())?)
        }
        BackendKind::Replay => {
            let path = cfg.transcript_path.as_ref().expect("validated");
            Box::new(ReplayAnnotator::from_path(path)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_toml() {
        let cfg: BackendConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.kind, BackendKind::Simulated);
        assert_eq!(cfg.max_retries, 5);
        assert_eq!(cfg.max_in_flight, 4);
        assert_eq!(cfg.backoff_base_ms, 1000);
        assert_eq!(cfg.temperature, None);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn nested_fallback_parses() {
        let cfg: BackendConfig = toml::from_str(
            r#"
            kind = "http_chat"
            endpoint_url = "https://example.invalid/v1/chat/completions"
            model_name = "primary-model"
            api_key_env = "PRIMARY_KEY"
            auth_style = "api_key_header"
            rate_limit = 2.0

            [fallback]
            kind = "http_chat"
            endpoint_url = "https://example.invalid/other"
            model_name = "backup"
            api_key_env = "BACKUP_KEY"
            "#,
        )
        .unwrap();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.auth_style, AuthStyle::ApiKeyHeader);
        assert_eq!(cfg.fallback.unwrap().model_name, "backup");
    }

    #[test]
    fn invalid_values_rejected() {
        let cfg = BackendConfig {
            max_retries: 0,
            ..BackendConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(BackendError::Config(_))));
        let cfg = BackendConfig {
            rate_limit: Some(0.0),
            ..BackendConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = BackendConfig {
            kind: BackendKind::HttpChat,
            ..BackendConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = BackendConfig {
            kind: BackendKind::Replay,
            ..BackendConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn simulated_without_settings_is_config_error() {
        let err = Backend::from_config(&BackendConfig::simulated(), None).err().unwrap();
        assert!(matches!(err, BackendError::Config(_)));
    }
}
