//! Prompt optimization for LLM task agents: trials in text environments,
//! feedback-driven prompt rewrites, beam search and a learned score filter.

pub mod config;
pub mod feedback;
pub mod generator;
pub mod ledger;
pub mod llm;
pub mod optimizer;
pub mod surrogate;
pub mod trial;

pub use config::{ConfigError, RunConfig, ScoreFactor};
pub use feedback::FeedbackTemplates;
pub use generator::{human_prompt, MetaPrompts};
pub use ledger::{FeedbackItem, Ledger, LedgerError, Prompt, PromptId, PromptRecord};
pub use optimizer::{Backends, LevelStats, OptimizeError, Optimizer, Progress, RunOutcome, RunReport};
pub use trial::{Evaluation, Evaluator, TrialResult};
