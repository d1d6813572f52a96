//! Text-protocol planning environments for LLM agents.
//!
//! Every environment exposes the same surface: a seeded [`EnvInstance`]
//! describing the initial state, an [`Episode`] that consumes raw model replies
//! and returns a [`StepOutcome`], and sub-goal accounting that feeds the
//! progress score.
//!
//! Replies are parsed leniently: the first well-formed action expression in
//! the reply is used and surrounding prose is ignored.

mod blocksworld;
mod boxlift;
mod boxnet;
mod episode;
mod gridworld;
mod instance;
mod kind;
mod logistics;
pub mod oracle;
mod parse;
pub mod score;
mod warehouse;

pub use blocksworld::BlocksState;
pub use boxlift::{BoxLiftState, LiftBox};
pub use boxnet::{BoxNet1State, BoxNet2State, NetBox, NetTarget};
pub use episode::{Episode, StepOutcome};
pub use gridworld::{GridGoal, GridState};
pub use instance::{generate_instances, EnvInstance, SizeParams, TaskState};
pub use kind::{EnvKind, ErrorKind};
pub use logistics::{LogisticsPackage, LogisticsState, Vehicle};
pub use score::{modified_score, progress_score, ScoreMode};
pub use warehouse::{WarehouseAgent, WarehouseBox, WarehousePos, WarehouseState};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("infeasible size parameters: {0}")]
    Infeasible(String),
    #[error("initial state does not match env kind {kind}: {reason}")]
    State { kind: EnvKind, reason: String },
    #[error("episode is already done")]
    EpisodeDone,
}

pub type Result<T, E = EnvError> = std::result::Result<T, E>;

/// What a single environment transition produced, before episode bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Applied {
    pub action: Option<String>,
    pub feedback: String,
    pub error: Option<ErrorKind>,
}

impl Applied {
    pub fn ok(action: impl Into<String>, feedback: impl Into<String>) -> Self {
        Self {
            action: Some(action.into()),
            feedback: feedback.into(),
            error: None,
        }
    }

    pub fn fail(action: Option<String>, error: ErrorKind, feedback: impl Into<String>) -> Self {
        Self {
            action,
            feedback: feedback.into(),
            error: Some(error),
        }
    }

    pub fn syntactic(feedback: impl Into<String>) -> Self {
        Self::fail(None, ErrorKind::Syntactic, feedback)
    }
}

/// Shared behaviour of every environment state.
pub(crate) trait Task {
    fn observe(&self) -> String;
    /// Parse `reply` and apply it. Implementations must leave `self` untouched
    /// when the returned value carries an error.
    fn apply(&mut self, reply: &str) -> Applied;
    fn subgoals(&self) -> (usize, usize);
    fn validate(&self) -> Result<()>;
}
