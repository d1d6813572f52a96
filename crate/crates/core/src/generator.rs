//! Candidate prompts: feedback summaries from the summarizer model, rewrites
//! from the generator model.

use std::path::Path;
use std::sync::OnceLock;

use promst_envs::EnvKind;
use rand::Rng;
use regex::Regex;
use thiserror::Error;

use crate::feedback::{group_by_type, sample_feedback};
use crate::ledger::{FeedbackItem, PromptRecord};
use crate::llm::{ChatBackend, ChatRequest, LlmError};

/// Consecutive failed attempts after which a candidate slot is given up.
pub const SLOT_ATTEMPTS: usize = 3;

#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{0} model returned an empty reply")]
    Empty(&'static str),
    #[error("candidate duplicates an existing prompt")]
    Duplicate,
    #[error("meta-prompt: {0}")]
    Meta(String),
}

impl GenError {
    /// Failures that only cost the current attempt.
    pub fn is_attempt_failure(&self) -> bool {
        matches!(self, GenError::Empty(_) | GenError::Duplicate)
    }
}

pub fn human_prompt(kind: EnvKind) -> &'static str {
    match kind {
        EnvKind::Gridworld1 => include_str!("../data/prompts/gridworld1.txt"),
        EnvKind::Gridworld2 => include_str!("../data/prompts/gridworld2.txt"),
        EnvKind::Blocksworld => include_str!("../data/prompts/blocksworld.txt"),
        EnvKind::Logistics => include_str!("../data/prompts/logistics.txt"),
        EnvKind::Boxlift => include_str!("../data/prompts/boxlift.txt"),
        EnvKind::Boxnet1 => include_str!("../data/prompts/boxnet1.txt"),
        EnvKind::Boxnet2 => include_str!("../data/prompts/boxnet2.txt"),
        EnvKind::Warehouse => include_str!("../data/prompts/warehouse.txt"),
    }
    .trim_end()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPrompts {
    pub sum: String,
    pub gen: String,
}

const SUM_FIELDS: [&str; 2] = ["current_prompt", "feedback_type"];
const GEN_FIELDS: [&str; 3] = ["prompt_task_explain", "error_feedback", "trajectory_prompts"];

impl MetaPrompts {
    pub fn builtin() -> Self {
        MetaPrompts {
            sum: include_str!("../data/meta/sum.txt").into(),
            gen: include_str!("../data/meta/gen.txt").into(),
        }
    }

    pub fn new(sum: String, gen: String) -> Result<Self, GenError> {
        for (name, text, fields) in [("summarizer", &sum, &SUM_FIELDS[..]), ("generator", &gen, &GEN_FIELDS[..])] {
            if let Some(f) = fields.iter().find(|f| !text.contains(&format!("{{{f}}}"))) {
                return Err(GenError::Meta(format!("{name} meta-prompt lacks {{{f}}}")));
            }
        }
        Ok(MetaPrompts { sum, gen })
    }

    /// Replaces the built-in texts with files where given.
    pub fn load(sum: Option<&Path>, gen: Option<&Path>) -> Result<Self, GenError> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| GenError::Meta(format!("{}: {e}", p.display())));
        let base = Self::builtin();
        Self::new(
            sum.map(read).transpose()?.unwrap_or(base.sum),
            gen.map(read).transpose()?.unwrap_or(base.gen),
        )
    }
}

/// Single-pass substitution of `{name}` fields; inserted values are never
/// rescanned, and braces that are not fields are left alone.
pub fn fill(template: &str, fields: &[(&str, &str)]) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("static pattern"));
    re.replace_all(template, |c: &regex::Captures<'_>| {
        fields
            .iter()
            .find(|(k, _)| *k == &c[1])
            .map_or_else(|| c[0].to_string(), |(_, v)| v.to_string())
    })
    .into_owned()
}

/// Strips code fences and wrapping quotes from a generated prompt.
pub fn clean_candidate(reply: &str) -> String {
    let mut text = reply.trim();
    if let Some(inner) = text.strip_prefix("```") {
        let inner = inner.strip_suffix("```").unwrap_or(inner);
        text = match inner.split_once('\n') {
            Some((tag, body)) if !tag.trim().contains(' ') => body,
            _ => inner,
        }
        .trim();
    }
    for (open, close) in [('"', '"'), ('\'', '\''), ('“', '”')] {
        if text.len() > 1 && text.starts_with(open) && text.ends_with(close) {
            text = text[open.len_utf8()..text.len() - close.len_utf8()].trim();
        }
    }
    text.to_string()
}

pub fn trajectory_text(trajectory: &[String]) -> String {
    trajectory
        .iter()
        .enumerate()
        .map(|(i, p)| format!("\n\nPrompt {}:\n{p}", i + 1))
        .collect()
}

/// Outcome of filling one candidate slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub text: Option<String>,
    pub attempts: usize,
    pub generator_calls: usize,
    pub failures: Vec<String>,
}

pub struct Generator<'a> {
    pub meta: &'a MetaPrompts,
    pub summarizer: &'a dyn ChatBackend,
    pub generator: &'a dyn ChatBackend,
    pub max_reply_tokens: usize,
}

impl Generator<'_> {
    /// One summarizer call for a group of same-type feedback; an empty reply
    /// is asked again once.
    pub fn summarize(&self, current: &str, group: &[&FeedbackItem]) -> Result<String, GenError> {
        let examples = group.iter().map(|f| f.text.as_str()).collect::<Vec<_>>().join("\n\n");
        let text = fill(&self.meta.sum, &[("current_prompt", current), ("feedback_type", &examples)]);
        let request = ChatRequest::single(text, self.max_reply_tokens);
        for _ in 0..2 {
            let reply = self.summarizer.complete(&request)?;
            if !reply.trim().is_empty() {
                return Ok(reply.trim().to_string());
            }
        }
        Err(GenError::Empty("summarizer"))
    }

    /// Sample the parent's feedback, summarize each error type and rewrite.
    pub fn candidate<R: Rng + ?Sized>(
        &self,
        parent: &PromptRecord,
        rng: &mut R,
        generator_calls: &mut usize,
    ) -> Result<String, GenError> {
        let sample = sample_feedback(&parent.feedback, rng);
        let summaries = group_by_type(&sample)
            .iter()
            .map(|(_, group)| self.summarize(&parent.prompt.text, group))
            .collect::<Result<Vec<_>, _>>()?;
        let trajectory = trajectory_text(&parent.child_ancestors());
        let text = fill(
            &self.meta.gen,
            &[
                ("prompt_task_explain", &parent.prompt.text),
                ("error_feedback", &summaries.join("\n\n")),
                ("trajectory_prompts", &trajectory),
            ],
        );
        *generator_calls += 1;
        let candidate = clean_candidate(&self.generator.complete(&ChatRequest::single(text, self.max_reply_tokens))?);
        if candidate.is_empty() {
            return Err(GenError::Empty("generator"));
        }
        Ok(candidate)
    }

    /// Fills one slot, retrying up to [`SLOT_ATTEMPTS`] times on empty or
    /// duplicate candidates. `taken` reports texts already in use.
    pub fn propose<R: Rng + ?Sized>(
        &self,
        parent: &PromptRecord,
        rng: &mut R,
        taken: &dyn Fn(&str) -> bool,
    ) -> Result<Proposal, GenError> {
        let mut failures = Vec::new();
        let mut generator_calls = 0;
        for attempt in 1..=SLOT_ATTEMPTS {
            let outcome = self.candidate(parent, rng, &mut generator_calls).and_then(|c| {
                if taken(&c) {
                    Err(GenError::Duplicate)
                } else {
                    Ok(c)
                }
            });
            match outcome {
                Ok(text) => {
                    return Ok(Proposal {
                        text: Some(text),
                        attempts: attempt,
                        generator_calls,
                        failures,
                    })
                }
                Err(e) if e.is_attempt_failure() => failures.push(e.to_string()),
                Err(e) => return Err(e),
            }
        }
        tracing::warn!(parent = %parent.prompt.id, "candidate slot skipped after {SLOT_ATTEMPTS} failed attempts");
        Ok(Proposal {
            text: None,
            attempts: SLOT_ATTEMPTS,
            generator_calls,
            failures,
        })
    }
}
