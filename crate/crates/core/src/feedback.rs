//! Error feedback: rendering failed trials through per-environment templates,
//! sampling them and grouping them by error type.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use promst_envs::{EnvKind, ErrorKind};
use rand::Rng;
use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use crate::ledger::FeedbackItem;

/// Most feedback items passed to one summarization round.
pub const SAMPLE_LIMIT: usize = 10;

const BUILTIN: &str = include_str!("../data/feedback_templates.json");
const PLACEHOLDERS: [&str; 6] = ["response", "action", "state", "limit", "feedback", "format"];

#[derive(Debug, Error, PartialEq)]
pub enum FeedbackError {
    #[error("template file: {0}")]
    Parse(String),
    #[error("no template for {error} in {env}")]
    Missing { env: EnvKind, error: ErrorKind },
    #[error("more than one template for {error} in {env}")]
    Ambiguous { env: EnvKind, error: ErrorKind },
    #[error("template for {error} lists {env}, which never raises it")]
    OutOfVocabulary { env: EnvKind, error: ErrorKind },
    #[error("template for {error} uses unknown placeholder {{{name}}}")]
    Placeholder { error: ErrorKind, name: String },
    #[error("template for {0} does not quote the response")]
    NoResponse(ErrorKind),
    #[error("no action format for {0}")]
    NoFormat(EnvKind),
}

#[derive(Debug, Deserialize)]
struct TemplateSpec {
    error_type: ErrorKind,
    applicable_envs: Vec<EnvKind>,
    template_text: String,
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    action_formats: BTreeMap<EnvKind, String>,
    templates: Vec<TemplateSpec>,
}

/// What a renderer needs to know about one failed trial.
#[derive(Debug, Clone)]
pub struct FailureContext<'a> {
    pub env: EnvKind,
    pub error: ErrorKind,
    pub trial: usize,
    pub response: &'a str,
    pub action: Option<&'a str>,
    /// Observation the failing response answered.
    pub state: &'a str,
    pub env_feedback: &'a str,
    pub limit: usize,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("static pattern"))
}

#[derive(Debug, Clone)]
pub struct FeedbackTemplates {
    formats: HashMap<EnvKind, String>,
    table: HashMap<(EnvKind, ErrorKind), String>,
}

impl FeedbackTemplates {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("built-in templates are complete")
    }

    pub fn load(path: &Path) -> Result<Self, FeedbackError> {
        let text = std::fs::read_to_string(path).map_err(|e| FeedbackError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and checks coverage: every error an environment can raise has
    /// exactly one template, and templates only use known placeholders.
    pub fn parse(text: &str) -> Result<Self, FeedbackError> {
        let file: TemplateFile = serde_json::from_str(text).map_err(|e| FeedbackError::Parse(e.to_string()))?;
        let mut table = HashMap::new();
        for spec in file.templates {
            let names: Vec<&str> = placeholder_re()
                .captures_iter(&spec.template_text)
                .map(|c| c.get(1).map_or("", |m| m.as_str()))
                .collect();
            if let Some(bad) = names.iter().find(|n| !PLACEHOLDERS.contains(n)) {
                return Err(FeedbackError::Placeholder {
                    error: spec.error_type,
                    name: bad.to_string(),
                });
            }
            if !names.contains(&"response") {
                return Err(FeedbackError::NoResponse(spec.error_type));
            }
            for env in spec.applicable_envs {
                if !env.error_vocabulary().contains(&spec.error_type) {
                    return Err(FeedbackError::OutOfVocabulary {
                        env,
                        error: spec.error_type,
                    });
                }
                if table.insert((env, spec.error_type), spec.template_text.clone()).is_some() {
                    return Err(FeedbackError::Ambiguous {
                        env,
                        error: spec.error_type,
                    });
                }
            }
        }
        for env in EnvKind::ALL {
            if !file.action_formats.contains_key(&env) {
                return Err(FeedbackError::NoFormat(env));
            }
            if let Some(&error) = env.error_vocabulary().iter().find(|e| !table.contains_key(&(env, **e))) {
                return Err(FeedbackError::Missing { env, error });
            }
        }
        Ok(FeedbackTemplates {
            formats: file.action_formats.into_iter().collect(),
            table,
        })
    }

    pub fn render(&self, ctx: &FailureContext<'_>) -> Result<FeedbackItem, FeedbackError> {
        let template = self.table.get(&(ctx.env, ctx.error)).ok_or(FeedbackError::Missing {
            env: ctx.env,
            error: ctx.error,
        })?;
        let format = self.formats.get(&ctx.env).ok_or(FeedbackError::NoFormat(ctx.env))?;
        let limit = ctx.limit.to_string();
        let text = placeholder_re().replace_all(template, |c: &regex::Captures<'_>| match &c[1] {
            "response" => ctx.response.to_string(),
            "action" => ctx.action.unwrap_or("(no recognised action)").to_string(),
            "state" => ctx.state.to_string(),
            "limit" => limit.clone(),
            "feedback" => ctx.env_feedback.to_string(),
            _ => format.clone(),
        });
        Ok(FeedbackItem {
            error_type: ctx.error,
            text: text.into_owned(),
            trial: ctx.trial,
        })
    }
}

/// Uniform sample without replacement of up to [`SAMPLE_LIMIT`] items,
/// kept in their original order.
pub fn sample_feedback<'a, R: Rng + ?Sized>(items: &'a [FeedbackItem], rng: &mut R) -> Vec<&'a FeedbackItem> {
    let amount = items.len().min(SAMPLE_LIMIT);
    let mut picked = rand::seq::index::sample(rng, items.len(), amount).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| &items[i]).collect()
}

/// Groups items by error type; groups appear in order of first occurrence.
pub fn group_by_type<'a>(items: &[&'a FeedbackItem]) -> Vec<(ErrorKind, Vec<&'a FeedbackItem>)> {
    let mut groups: Vec<(ErrorKind, Vec<&FeedbackItem>)> = Vec::new();
    for item in items {
        match groups.iter_mut().find(|(t, _)| *t == item.error_type) {
            Some((_, g)) => g.push(item),
            None => groups.push((item.error_type, vec![item])),
        }
    }
    groups
}
