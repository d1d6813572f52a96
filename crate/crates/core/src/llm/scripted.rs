use std::collections::VecDeque;
use std::sync::Mutex;

use regex::Regex;
use serde::Deserialize;

use super::{ChatBackend, ChatRequest, LlmError};

/// Replies served strictly in order.
pub struct ScriptedBackend {
    replies: Mutex<(VecDeque<String>, usize)>,
}

impl ScriptedBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend {
            replies: Mutex::new((replies.into_iter().map(Into::into).collect(), 0)),
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, _request: &ChatRequest) -> Result<String, LlmError> {
        let mut guard = self.replies.lock().expect("script lock");
        let (queue, served) = &mut *guard;
        let reply = queue.pop_front().ok_or(LlmError::ScriptUnderrun { served: *served })?;
        *served += 1;
        Ok(reply)
    }
}

pub struct Rule {
    pub pattern: Regex,
    pub reply: String,
}

/// First rule whose pattern matches the system text or latest user turn wins.
pub struct RuleBackend {
    rules: Vec<Rule>,
    default: Option<String>,
}

impl RuleBackend {
    pub fn new(rules: Vec<Rule>, default: Option<String>) -> Self {
        RuleBackend { rules, default }
    }

    pub fn constant(reply: impl Into<String>) -> Self {
        RuleBackend {
            rules: Vec::new(),
            default: Some(reply.into()),
        }
    }
}

impl ChatBackend for RuleBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let last = request.last_user_text();
        self.rules
            .iter()
            .find(|r| r.pattern.is_match(last) || r.pattern.is_match(&request.system_text))
            .map(|r| r.reply.clone())
            .or_else(|| self.default.clone())
            .ok_or(LlmError::NoRule)
    }
}

/// Backend computed by a closure; the usual way to script a whole world in tests.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (self.0)(request)
    }
}

#[derive(Debug, Deserialize)]
pub struct RuleSpec {
    pattern: String,
    reply: String,
}

/// On-disk script: a bare list of replies, `{"replies": [...]}`, or
/// `{"rules": [{"pattern", "reply"}], "default": "..."}`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ScriptFile {
    List(Vec<String>),
    Replies {
        replies: Vec<String>,
    },
    Rules {
        #[serde(default)]
        rules: Vec<RuleSpec>,
        #[serde(default)]
        default: Option<String>,
    },
}

impl ScriptFile {
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::Config(format!("script file: {e}")))
    }

    pub fn into_backend(self) -> Result<Box<dyn ChatBackend>, LlmError> {
        Ok(match self {
            ScriptFile::List(replies) | ScriptFile::Replies { replies } => Box::new(ScriptedBackend::new(replies)),
            ScriptFile::Rules { rules, default } => {
                let rules = rules
                    .into_iter()
                    .map(|r| {
                        Regex::new(&r.pattern)
                            .map(|pattern| Rule { pattern, reply: r.reply })
                            .map_err(|e| LlmError::Config(format!("rule pattern: {e}")))
                    })
                    .collect::<Result<_, _>>()?;
                Box::new(RuleBackend::new(rules, default))
            }
        })
    }
}
