use serde::{Deserialize, Serialize};

use crate::{EnvError, EnvInstance, EnvKind, ErrorKind, Result, TaskState};

/// What the agent sees after a reset or a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: String,
    pub env_feedback: String,
    pub error: Option<ErrorKind>,
    pub done: bool,
    pub subgoals_done: usize,
    pub subgoals_total: usize,
    pub step_index: usize,
    /// Canonical form of the parsed action, when one was recognised.
    pub action: Option<String>,
}

/// One run of an environment from its initial state.
///
/// Any tagged error ends the episode; otherwise it ends when every sub-goal
/// is met.
#[derive(Debug, Clone)]
pub struct Episode {
    kind: EnvKind,
    state: TaskState,
    step_index: usize,
    done: bool,
}

impl Episode {
    pub fn reset(instance: &EnvInstance) -> Result<(Self, StepOutcome)> {
        let state = instance.state()?;
        let mut ep = Episode {
            kind: instance.env_kind,
            state,
            step_index: 0,
            done: false,
        };
        let (done, total) = ep.state.subgoals();
        ep.done = done == total;
        let outcome = ep.outcome(String::new(), None, None);
        Ok((ep, outcome))
    }

    pub fn step(&mut self, reply: &str) -> Result<StepOutcome> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let before = self.state.clone();
        let applied = self.state.task_mut().apply(reply);
        if let Some(e) = applied.error {
            debug_assert!(
                self.kind.error_vocabulary().contains(&e),
                "{e} outside {} vocabulary",
                self.kind
            );
            self.state = before;
            self.done = true;
        }
        self.step_index += 1;
        let (done, total) = self.state.subgoals();
        if done == total {
            self.done = true;
        }
        Ok(self.outcome(applied.feedback, applied.error, applied.action))
    }

    fn outcome(&self, env_feedback: String, error: Option<ErrorKind>, action: Option<String>) -> StepOutcome {
        let (subgoals_done, subgoals_total) = self.state.subgoals();
        StepOutcome {
            observation: self.state.observe(),
            env_feedback,
            error,
            done: self.done,
            subgoals_done,
            subgoals_total,
            step_index: self.step_index,
            action,
        }
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn state(&self) -> &TaskState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Canonical serialization of the current state, for loop detection.
    pub fn state_key(&self) -> String {
        self.state.to_value().to_string()
    }
}
