//! Running a prompt through environment episodes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use promst_envs::{modified_score, progress_score, EnvError, EnvInstance, EnvKind, Episode, ErrorKind, StepOutcome};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{RunConfig, ScoreFactor};
use crate::feedback::{FailureContext, FeedbackError, FeedbackTemplates};
use crate::ledger::FeedbackItem;
use crate::llm::{truncate_history, ChatBackend, ChatRequest, Exchange, LlmError, Turn};

#[derive(Debug, Error)]
pub enum TrialError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error("transcript: {0}")]
    Io(#[from] std::io::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct TranscriptStep {
    pub observation: String,
    pub reply: String,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub env_kind: EnvKind,
    pub progress: f64,
    pub final_score: f64,
    pub steps_taken: usize,
    pub collisions: usize,
    pub success: bool,
    pub error: Option<ErrorKind>,
    /// The repeated action when the trial ended in a loop.
    pub loop_action: Option<String>,
    pub max_rounds: usize,
    pub transcript: Vec<TranscriptStep>,
}

impl TrialResult {
    pub fn failure(&self) -> Option<FailureContext<'_>> {
        let error = self.error?;
        let last = self.transcript.last()?;
        Some(FailureContext {
            env: self.env_kind,
            error,
            trial: self.trial,
            response: &last.reply,
            action: self.loop_action.as_deref().or(last.outcome.action.as_deref()),
            state: &last.observation,
            env_feedback: &last.outcome.env_feedback,
            limit: self.max_rounds,
        })
    }

    pub fn transcript_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.transcript.iter().enumerate() {
            let _ = write!(
                out,
                "## step {}\n### observation\n{}\n### reply\n{}\n### environment\n{}\n\n",
                i + 1,
                s.observation,
                s.reply,
                s.outcome.env_feedback
            );
        }
        let _ = writeln!(
            out,
            "## result\nprogress: {}\nscore: {}\nsteps: {}\nerror: {}",
            self.progress,
            self.final_score,
            self.steps_taken,
            self.error.map_or("none".to_string(), |e| e.to_string())
        );
        out
    }
}

/// Detects trials that make no progress: a (state, action) pair repeated
/// `repeat_threshold` times, or `unchanged_limit` steps in a row that leave
/// the state as it was.
#[derive(Debug)]
pub struct LoopDetector {
    repeat_threshold: usize,
    unchanged_limit: usize,
    seen: HashMap<(String, String), usize>,
    unchanged: usize,
}

impl LoopDetector {
    pub fn new(repeat_threshold: usize, unchanged_limit: usize) -> Self {
        LoopDetector {
            repeat_threshold,
            unchanged_limit,
            seen: HashMap::new(),
            unchanged: 0,
        }
    }

    /// Records one step; true once the trial counts as stuck.
    pub fn observe(&mut self, before: &str, action: &str, after: &str) -> bool {
        let n = self.seen.entry((before.to_string(), action.to_string())).or_insert(0);
        *n += 1;
        self.unchanged = if before == after { self.unchanged + 1 } else { 0 };
        *n >= self.repeat_threshold || self.unchanged >= self.unchanged_limit
    }
}

/// Task-agent request: the prompt as system text, past rounds as
/// observation / reply / feedback turns, then the current observation.
pub fn build_request(prompt: &str, history: &[Exchange], observation: &str, cfg: &RunConfig) -> ChatRequest {
    let mut turns = Vec::with_capacity(history.len() * 3 + 1);
    for ex in history {
        turns.push(Turn::user(ex.observation.clone()));
        turns.push(Turn::assistant(ex.reply.clone()));
        turns.push(Turn::user(format!("Environment feedback: {}", ex.feedback)));
    }
    turns.push(Turn::user(observation.to_string()));
    ChatRequest {
        system_text: prompt.to_string(),
        turns,
        temperature: cfg.temperature,
        max_reply_tokens: cfg.max_reply_tokens,
    }
}

pub fn run_trial(
    prompt: &str,
    instance: &EnvInstance,
    trial: usize,
    backend: &dyn ChatBackend,
    cfg: &RunConfig,
) -> Result<TrialResult, TrialError> {
    let (mut ep, first) = Episode::reset(instance)?;
    let mut observation = first.observation.clone();
    let mut last = first;
    let mut history: Vec<Exchange> = Vec::new();
    let mut transcript = Vec::new();
    let mut detector = LoopDetector::new(cfg.loop_repeat_threshold, cfg.loop_unchanged_limit);
    let mut collisions = 0;
    let mut error = None;
    let mut loop_action = None;
    while !last.done {
        let request = build_request(prompt, truncate_history(&history, cfg.history_window), &observation, cfg);
        let reply = backend.complete(&request)?;
        let before = ep.state_key();
        let outcome = ep.step(&reply)?;
        if outcome.error == Some(ErrorKind::Collision) {
            collisions += 1;
        }
        let action = outcome.action.clone().unwrap_or_else(|| reply.trim().to_string());
        let stuck = detector.observe(&before, &action, &ep.state_key());
        history.push(Exchange {
            observation: observation.clone(),
            reply: reply.clone(),
            feedback: outcome.env_feedback.clone(),
        });
        transcript.push(TranscriptStep {
            observation,
            reply,
            outcome: outcome.clone(),
        });
        observation = outcome.observation.clone();
        last = outcome;
        if let Some(e) = last.error {
            error = Some(e);
            break;
        }
        if last.done {
            break;
        }
        if transcript.len() >= cfg.max_rounds_per_trial {
            error = Some(ErrorKind::QueryLimit);
            break;
        }
        if stuck {
            error = Some(ErrorKind::StuckInLoop);
            loop_action = Some(action);
            break;
        }
    }
    let progress = progress_score(last.subgoals_done, last.subgoals_total);
    let steps_taken = transcript.len();
    let factor = match cfg.preference_factor {
        ScoreFactor::StepCount => steps_taken,
        ScoreFactor::CollisionCount => collisions,
    };
    Ok(TrialResult {
        trial,
        env_kind: instance.env_kind,
        progress,
        final_score: modified_score(progress, factor as f64, cfg.preference_ratio, cfg.score_mode),
        steps_taken,
        collisions,
        success: last.subgoals_done == last.subgoals_total,
        error,
        loop_action,
        max_rounds: cfg.max_rounds_per_trial,
        transcript,
    })
}

/// Scores and feedback of one prompt over the trial instances.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub per_trial_scores: Vec<f64>,
    pub feedback: Vec<FeedbackItem>,
    pub trials: Vec<TrialResult>,
}

/// Evaluates prompts against a fixed instance set on a worker pool.
pub struct Evaluator<'a> {
    pub instances: &'a [EnvInstance],
    pub backend: &'a dyn ChatBackend,
    pub templates: &'a FeedbackTemplates,
    pub cfg: &'a RunConfig,
    pub dump_dir: Option<PathBuf>,
    pool: rayon::ThreadPool,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        instances: &'a [EnvInstance],
        backend: &'a dyn ChatBackend,
        templates: &'a FeedbackTemplates,
        cfg: &'a RunConfig,
    ) -> Result<Self, TrialError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| TrialError::Pool(e.to_string()))?;
        Ok(Evaluator {
            instances,
            backend,
            templates,
            cfg,
            dump_dir: None,
            pool,
        })
    }

    pub fn with_dump_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.dump_dir = dir;
        self
    }

    fn trial_with_retries(&self, prompt: &str, index: usize) -> Result<TrialResult, TrialError> {
        let mut attempt = 0;
        loop {
            match run_trial(prompt, &self.instances[index], index, self.backend, self.cfg) {
                Err(TrialError::Llm(e)) if e.is_transient() && attempt < self.cfg.trial_retries => {
                    attempt += 1;
                    tracing::warn!(trial = index, attempt, error = %e, "retrying trial");
                }
                other => return other,
            }
        }
    }

    /// Evaluates every prompt; results keep the input order whatever the
    /// pool size.
    pub fn evaluate_many(&self, prompts: &[(&str, &str)]) -> Result<Vec<Evaluation>, TrialError> {
        let n = self.instances.len();
        let jobs: Vec<(usize, usize)> = (0..prompts.len()).flat_map(|p| (0..n).map(move |t| (p, t))).collect();
        let results: Vec<TrialResult> = self.pool.install(|| {
            jobs.par_iter()
                .map(|&(p, t)| self.trial_with_retries(prompts[p].1, t))
                .collect::<Result<_, _>>()
        })?;
        let mut out = Vec::with_capacity(prompts.len());
        let mut results = results.into_iter();
        for (id, _) in prompts {
            let trials: Vec<TrialResult> = results.by_ref().take(n).collect();
            if let Some(dir) = &self.dump_dir {
                dump_transcripts(dir, id, &trials)?;
            }
            let feedback = trials
                .iter()
                .filter_map(TrialResult::failure)
                .map(|ctx| self.templates.render(&ctx))
                .collect::<Result<_, _>>()?;
            out.push(Evaluation {
                per_trial_scores: trials.iter().map(|t| t.final_score).collect(),
                feedback,
                trials,
            });
        }
        Ok(out)
    }

    pub fn evaluate(&self, id: &str, prompt: &str) -> Result<Evaluation, TrialError> {
        Ok(self.evaluate_many(&[(id, prompt)])?.remove(0))
    }
}

pub fn dump_transcripts(dir: &Path, prompt_id: &str, trials: &[TrialResult]) -> Result<(), std::io::Error> {
    std::fs::create_dir_all(dir)?;
    for t in trials {
        std::fs::write(dir.join(format!("{prompt_id}_trial{:02}.txt", t.trial)), t.transcript_text())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FnBackend, RuleBackend, ScriptedBackend};
    use promst_envs::{GridGoal, GridState, ScoreMode, TaskState};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn grid() -> EnvInstance {
        let state = GridState {
            rows: 3,
            cols: 3,
            robot: [0, 0],
            goals: vec![GridGoal {
                index: 0,
                pos: [0, 2],
                picked: false,
            }],
            obstacles: vec![[1, 1]],
            ordered: false,
        };
        EnvInstance::from_state(EnvKind::Gridworld1, &TaskState::Grid(state)).unwrap()
    }

    fn cfg() -> RunConfig {
        RunConfig {
            max_rounds_per_trial: 10,
            ..RunConfig::default()
        }
    }

    #[test]
    fn scripted_success() {
        let b = ScriptedBackend::new(["{Move right}", "{Move right}", "{Pick goal}"]);
        let r = run_trial("p", &grid(), 0, &b, &cfg()).unwrap();
        assert!(r.success);
        assert_eq!((r.progress, r.final_score, r.steps_taken, r.error), (1.0, 1.0, 3, None));
        assert!(r.failure().is_none());
    }

    #[test]
    fn syntactic_ends_trial() {
        let r = run_trial("p", &grid(), 0, &RuleBackend::constant("hello"), &cfg()).unwrap();
        assert_eq!((r.error, r.steps_taken, r.progress), (Some(ErrorKind::Syntactic), 1, 0.0));
        let item = FeedbackTemplates::builtin().render(&r.failure().unwrap()).unwrap();
        assert!(item.text.contains("hello"));
        assert!(item.text.contains("{Move up}"));
    }

    #[test]
    fn repeated_noop_is_a_loop() {
        let r = run_trial("p", &grid(), 0, &RuleBackend::constant("{Pick goal}"), &cfg()).unwrap();
        assert_eq!((r.error, r.steps_taken), (Some(ErrorKind::StuckInLoop), 3));
        assert_eq!(r.loop_action.as_deref(), Some("Pick goal"));
    }

    #[test]
    fn oscillation_is_a_loop() {
        let step = AtomicUsize::new(0);
        let b = FnBackend(|_: &ChatRequest| {
            let i = step.fetch_add(1, Ordering::SeqCst);
            Ok(if i.is_multiple_of(2) { "{Move down}" } else { "{Move up}" }.to_string())
        });
        let r = run_trial("p", &grid(), 0, &b, &cfg()).unwrap();
        assert_eq!((r.error, r.steps_taken), (Some(ErrorKind::StuckInLoop), 5));
    }

    #[test]
    fn query_limit_at_max_rounds() {
        let step = AtomicUsize::new(0);
        let moves = [
            "{Move down}",
            "{Move down}",
            "{Move right}",
            "{Move right}",
            "{Move up}",
            "{Move left}",
        ];
        let b = FnBackend(|_: &ChatRequest| Ok(moves[step.fetch_add(1, Ordering::SeqCst) % moves.len()].to_string()));
        let c = RunConfig {
            max_rounds_per_trial: 4,
            ..cfg()
        };
        let r = run_trial("p", &grid(), 0, &b, &c).unwrap();
        assert_eq!((r.error, r.steps_taken, r.success), (Some(ErrorKind::QueryLimit), 4, false));
    }

    #[test]
    fn history_is_windowed() {
        let c = RunConfig {
            history_window: 2,
            loop_unchanged_limit: 100,
            loop_repeat_threshold: 100,
            max_rounds_per_trial: 6,
            ..cfg()
        };
        let seen = std::sync::Mutex::new(Vec::new());
        let b = FnBackend(|r: &ChatRequest| {
            assert_eq!(r.system_text, "sys");
            seen.lock().unwrap().push(r.turns.len());
            Ok("{Pick goal}".to_string())
        });
        let _ = run_trial("sys", &grid(), 0, &b, &c);
        assert_eq!(*seen.lock().unwrap(), vec![1, 4, 7, 7, 7, 7]);
    }

    #[test]
    fn modified_scores_use_step_count() {
        let c = RunConfig {
            score_mode: ScoreMode::ModifiedSubtractive,
            preference_ratio: 0.01,
            ..cfg()
        };
        let b = ScriptedBackend::new(["{Move right}", "{Move right}", "{Pick goal}"]);
        let r = run_trial("p", &grid(), 0, &b, &c).unwrap();
        assert!((r.final_score - 0.97).abs() < 1e-12);
    }

    #[test]
    fn evaluation_is_pool_size_invariant() {
        let insts = promst_envs::generate_instances(
            EnvKind::Gridworld1,
            5,
            6,
            &promst_envs::SizeParams::defaults(EnvKind::Gridworld1),
        )
        .unwrap();
        let t = FeedbackTemplates::builtin();
        let b = crate::llm::OracleBackend;
        let run = |jobs| {
            let c = RunConfig { jobs, ..cfg() };
            let e = Evaluator::new(&insts, &b, &t, &c).unwrap();
            let out = e.evaluate_many(&[("a", "x"), ("b", "y")]).unwrap();
            out.into_iter().map(|e| (e.per_trial_scores, e.feedback)).collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn transient_errors_are_retried() {
        let calls = AtomicUsize::new(0);
        let b = FnBackend(|_: &ChatRequest| {
            if calls.fetch_add(1, Ordering::SeqCst) == 0 {
                Err(LlmError::Transport {
                    attempts: 3,
                    message: "down".into(),
                })
            } else {
                Ok("hello".to_string())
            }
        });
        let insts = vec![grid()];
        let t = FeedbackTemplates::builtin();
        let c = cfg();
        let e = Evaluator::new(&insts, &b, &t, &c).unwrap();
        let eval = e.evaluate("p000000", "p").unwrap();
        assert_eq!(eval.per_trial_scores, vec![0.0]);
        assert_eq!(eval.feedback.len(), 1);
        let auth = FnBackend(|_: &ChatRequest| Err(LlmError::Auth("no".into())));
        let e = Evaluator::new(&insts, &auth, &t, &c).unwrap();
        assert!(matches!(e.evaluate("p", "p"), Err(TrialError::Llm(LlmError::Auth(_)))));
    }

    #[test]
    fn transcripts_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let insts = vec![grid(), grid()];
        let t = FeedbackTemplates::builtin();
        let c = cfg();
        let b = RuleBackend::constant("hello");
        let e = Evaluator::new(&insts, &b, &t, &c)
            .unwrap()
            .with_dump_dir(Some(dir.path().to_path_buf()));
        e.evaluate("p000001", "p").unwrap();
        let text = std::fs::read_to_string(dir.path().join("p000001_trial01.txt")).unwrap();
        assert!(text.contains("### reply\nhello"));
    }
}
