use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use super::{ChatBackend, LiveBackend, LlmError, OracleBackend, RuleBackend, ScriptFile, TapeBackend};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendKind {
    Live { model: String, url: String },
    Scripted(PathBuf),
    Tape(PathBuf),
    Oracle,
    Constant(String),
}

/// Textual backend selector: `live:MODEL@URL`, `scripted:FILE`, `tape:FILE`,
/// `oracle` or `constant:TEXT`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendSpec(pub BackendKind);

impl FromStr for BackendSpec {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        let kind = match head {
            "oracle" if rest.is_empty() => BackendKind::Oracle,
            "constant" => BackendKind::Constant(rest.to_string()),
            "tape" if !rest.is_empty() => BackendKind::Tape(rest.into()),
            "scripted" if rest.ends_with(".jsonl") => BackendKind::Tape(rest.into()),
            "scripted" if !rest.is_empty() => BackendKind::Scripted(rest.into()),
            "live" => {
                let (model, url) = rest
                    .split_once('@')
                    .filter(|(m, u)| !m.is_empty() && !u.is_empty())
                    .ok_or_else(|| LlmError::Config(format!("expected live:MODEL@URL, got '{s}'")))?;
                BackendKind::Live {
                    model: model.into(),
                    url: url.into(),
                }
            }
            _ => return Err(LlmError::Config(format!("unknown backend '{s}'"))),
        };
        Ok(BackendSpec(kind))
    }
}

impl BackendSpec {
    pub fn build(&self, api_key_var: &str, timeout: Duration, max_concurrent: usize) -> Result<Arc<dyn ChatBackend>, LlmError> {
        Ok(match &self.0 {
            BackendKind::Live { model, url } => Arc::new(LiveBackend::new(model, url, api_key_var, timeout, max_concurrent)?),
            BackendKind::Scripted(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
                Arc::from(ScriptFile::parse(&text)?.into_backend()?)
            }
            BackendKind::Tape(path) => Arc::new(TapeBackend::load(path)?),
            BackendKind::Oracle => Arc::new(OracleBackend),
            BackendKind::Constant(text) => Arc::new(RuleBackend::constant(text.clone())),
        })
    }

    pub fn is_live(&self) -> bool {
        matches!(self.0, BackendKind::Live { .. })
    }
}
