//! Chat-completion backends: live HTTP, scripted replies, taped replays and
//! text-driven oracle policies.

mod history;
mod live;
pub mod oracle;
mod scripted;
mod spec;
mod tape;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use history::{truncate_history, Exchange};
pub use live::LiveBackend;
pub use oracle::OracleBackend;
pub use scripted::{FnBackend, Rule, RuleBackend, ScriptFile, ScriptedBackend};
pub use spec::{BackendKind, BackendSpec};
pub use tape::{TapeBackend, TapeEntry, TapeRecorder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Turn {
            role: Role::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Turn {
            role: Role::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    /// Oldest first.
    pub turns: Vec<Turn>,
    pub temperature: f64,
    pub max_reply_tokens: usize,
}

impl ChatRequest {
    /// Single user message with no system text, as used by the meta-prompts.
    pub fn single(text: impl Into<String>, max_reply_tokens: usize) -> Self {
        ChatRequest {
            system_text: String::new(),
            turns: vec![Turn::user(text)],
            temperature: 0.0,
            max_reply_tokens,
        }
    }

    pub fn last_user_text(&self) -> &str {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role == Role::User)
            .map_or("", |t| t.text.as_str())
    }

    /// Stable content hash used to key taped replies.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("requests serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("scripted backend ran out of replies after {served}")]
    ScriptUnderrun { served: usize },
    #[error("no scripted rule matches the request")]
    NoRule,
    #[error("tape has no reply for request {0}")]
    TapeMiss(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("backend I/O: {0}")]
    Io(String),
}

impl LlmError {
    pub fn is_transient(&self) -> bool {
        matches!(self, LlmError::Transport { .. })
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

/// Counts completed and failed calls of a shared backend.
pub struct Metered {
    inner: Arc<dyn ChatBackend>,
    completed: AtomicUsize,
    failed: AtomicUsize,
}

impl Metered {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        Metered {
            inner,
            completed: AtomicUsize::new(0),
            failed: AtomicUsize::new(0),
        }
    }

    pub fn completed(&self) -> usize {
        self.completed.load(Ordering::SeqCst)
    }

    pub fn failed(&self) -> usize {
        self.failed.load(Ordering::SeqCst)
    }
}

impl ChatBackend for Metered {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let out = self.inner.complete(request);
        let counter = if out.is_ok() { &self.completed } else { &self.failed };
        counter.fetch_add(1, Ordering::SeqCst);
        out
    }
}
