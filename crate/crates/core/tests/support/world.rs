//! A scripted BoxLift world whose scores follow a known rule.
//!
//! Every prompt carries a quality tag `[q=X]`. The task agent lifts
//! `round(10 X)` of the ten boxes in its only round, so each trial scores X.
//! The generator reads the parent's tag and writes a child tagged with the
//! parent quality plus `step`, capped at 1.0. All three backends are pure
//! functions of the request.

#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use promst::llm::{ChatBackend, ChatRequest, FnBackend, LlmError};
use promst::surrogate::{Predictor, PredictorKind, SurrogateError, TrainedMember};
use promst::RunConfig;
use promst_envs::{BoxLiftState, EnvInstance, EnvKind, LiftBox, TaskState};
use regex::Regex;

pub const BOXES: usize = 10;

pub fn instances(trials: usize) -> Vec<EnvInstance> {
    (0..trials)
        .map(|t| {
            let boxes = (0..BOXES)
                .map(|j| {
                    let v = (10 + j + t) as f64 / 10.0;
                    LiftBox {
                        volume: v,
                        weight: v,
                        lifted: false,
                    }
                })
                .collect();
            let agents = (0..BOXES).map(|i| (50 + i) as f64 / 10.0).collect();
            EnvInstance::from_state(EnvKind::Boxlift, &TaskState::BoxLift(BoxLiftState { boxes, agents })).unwrap()
        })
        .collect()
}

pub fn quality(text: &str) -> f64 {
    Regex::new(r"\[q=([0-9.]+)\]")
        .unwrap()
        .captures(text)
        .map_or(0.0, |c| c[1].parse().unwrap())
}

pub fn tagged(q: f64, rest: &str) -> String {
    format!("Lift the boxes with the agents. [q={q:.1}] {rest}")
}

pub fn task_reply(request: &ChatRequest) -> String {
    let want = (quality(&request.system_text) * BOXES as f64).round() as usize;
    let obs = request.last_user_text();
    let line = |prefix: &str| obs.lines().find_map(|l| l.strip_prefix(prefix)).unwrap_or("").to_string();
    let boxes: Vec<String> = Regex::new(r"box\[[0-9.]+V\]")
        .unwrap()
        .find_iter(&line("Boxes left to lift: "))
        .map(|m| m.as_str().to_string())
        .collect();
    let agents: Vec<String> = Regex::new(r"agent\[[0-9.]+W\]")
        .unwrap()
        .find_iter(&line("Available lifting agents: "))
        .map(|m| m.as_str().to_string())
        .collect();
    let plan: Vec<String> = boxes
        .iter()
        .zip(&agents)
        .take(want)
        .map(|(b, a)| format!("'{b}':'{a}'"))
        .collect();
    format!("{{{}}}", plan.join(", "))
}

pub fn task_backend() -> Arc<dyn ChatBackend> {
    Arc::new(FnBackend(|r: &ChatRequest| Ok(task_reply(r))))
}

/// Task backend that fails with an auth error once `limit` calls were made.
pub fn failing_task_backend(limit: usize) -> Arc<dyn ChatBackend> {
    let calls = AtomicUsize::new(0);
    Arc::new(FnBackend(move |r: &ChatRequest| {
        if calls.fetch_add(1, Ordering::SeqCst) >= limit {
            Err(LlmError::Auth("injected interruption".into()))
        } else {
            Ok(task_reply(r))
        }
    }))
}

pub fn summarizer_backend() -> Arc<dyn ChatBackend> {
    Arc::new(FnBackend(|r: &ChatRequest| Ok(format!("Summary {}.", &r.hash()[..12]))))
}

pub fn parent_text(request: &ChatRequest) -> &str {
    let text = request.last_user_text();
    let start = text.find("Here is the prompt of task description: ").map_or(0, |i| i + 40);
    let end = text.find("\n\nHowever, the response").unwrap_or(text.len());
    &text[start..end]
}

pub fn generator_backend(step: f64) -> Arc<dyn ChatBackend> {
    Arc::new(FnBackend(move |r: &ChatRequest| {
        let q = ((quality(parent_text(r)) + step).min(1.0) * 10.0).round() / 10.0;
        Ok(tagged(q, &format!("rev {}", &r.hash()[..12])))
    }))
}

pub fn config() -> RunConfig {
    RunConfig {
        trials_per_prompt: 20,
        max_rounds_per_trial: 1,
        ..RunConfig::default()
    }
}

struct Zero;

impl Predictor for Zero {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>, SurrogateError> {
        Ok(vec![0.0; texts.len()])
    }
}

/// Ensemble members that predict 0 with no error, so every candidate fails
/// the acceptance rule once any prompt scored above zero.
#[derive(Default)]
pub struct RejectAll {
    pub trained: AtomicUsize,
}

impl PredictorKind for RejectAll {
    fn train_member(&self, _pairs: &[(String, f64)], _seed: u64) -> Result<TrainedMember, SurrogateError> {
        self.trained.fetch_add(1, Ordering::SeqCst);
        Ok(TrainedMember {
            predictor: Box::new(Zero),
            heldout_error: 0.0,
        })
    }
}
