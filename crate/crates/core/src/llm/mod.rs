//! Chat-completion gateway: a provider trait, an OpenAI-compatible HTTP
//! client and a scripted mock for offline runs.

mod http;
mod mock;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use http::OpenAiProvider;
pub use mock::{FnProvider, MockScript, ScriptedMock, TranscriptEntry};

pub const ENV_ENDPOINT: &str = "ONTORAG_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "ONTORAG_LLM_API_KEY";
pub const ENV_MODEL: &str = "ONTORAG_LLM_MODEL";

/// Temperature used by the pipeline outside of evaluation sweeps.
pub const DEFAULT_TEMPERATURE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Empty means "whatever the provider is configured with".
    #[serde(default)]
    pub model_id: String,
}

impl ChatRequest {
    /// A single user message at the pipeline default temperature.
    pub fn user(prompt: impl Into<String>) -> Self {
        ChatRequest {
            messages: vec![Message::user(prompt)],
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 1024,
            model_id: String::new(),
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(LlmError::InvalidRequest("at least one user message is required".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.messages)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("credential environment variable {0} is not set")]
    AuthMissing(String),
    #[error("mock script exhausted")]
    MockExhausted,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

/// Anything that can answer a chat request.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;

    fn model_id(&self) -> &str;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

/// Stable hex digest of a message list. Each message contributes its role,
/// a unit separator, its content and a record separator.
pub fn fingerprint(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(m.role.as_str().as_bytes());
        h.update([0x1f]);
        h.update(m.content.as_bytes());
        h.update([0x1e]);
    }
    hex::encode(h.finalize())
}

/// Fingerprint of a request consisting of one user message.
pub fn prompt_fingerprint(prompt: &str) -> String {
    fingerprint(&[Message::user(prompt)])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    #[default]
    OpenaiCompatible,
    ScriptedMock,
}

/// How to reach a provider. The credential itself never lives here, only
/// the name of the environment variable holding it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub credential_env: String,
    pub model_id: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Base delay of the exponential backoff.
    pub retry_base_ms: u64,
    pub max_in_flight: usize,
    pub script: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::OpenaiCompatible,
            endpoint: None,
            credential_env: ENV_API_KEY.into(),
            model_id: "gpt-4".into(),
            timeout_secs: 60,
            max_retries: 3,
            retry_base_ms: 500,
            max_in_flight: 4,
            script: None,
        }
    }
}

impl ProviderConfig {
    pub fn mock(script: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            kind: ProviderKind::ScriptedMock,
            script: Some(script.into()),
            model_id: mock::MOCK_MODEL.into(),
            ..Self::default()
        }
    }

    /// Overrides endpoint and model from the environment when set.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var(ENV_ENDPOINT) {
            if !v.is_empty() {
                self.endpoint = Some(v);
            }
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            if !v.is_empty() {
                self.model_id = v;
            }
        }
    }

    pub fn build(&self) -> Result<Arc<dyn ChatProvider>, LlmError> {
        match self.kind {
            ProviderKind::ScriptedMock => {
                let path = self
                    .script
                    .as_ref()
                    .ok_or_else(|| LlmError::Config("scripted-mock requires a script path".into()))?;
                Ok(Arc::new(ScriptedMock::from_file(path)?))
            }
            ProviderKind::OpenaiCompatible => Ok(Arc::new(OpenAiProvider::new(self)?)),
        }
    }
}
