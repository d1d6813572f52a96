//! Level-wise beam search over prompts.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use promst_envs::EnvInstance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::feedback::FeedbackTemplates;
use crate::generator::{GenError, Generator, MetaPrompts};
use crate::ledger::{Ledger, LedgerError, Prompt, PromptId, PromptRecord};
use crate::llm::{ChatBackend, LlmError, Metered};
use crate::surrogate::{fit_ensemble, splitmix64, PredictorKind, SurrogateEnsemble, SurrogateError};
use crate::trial::{Evaluator, TrialError};

/// Score increase below this does not count as an improvement.
pub const IMPROVEMENT_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Trial(TrialError),
    #[error(transparent)]
    Gen(GenError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error("progress file {path}: {reason}")]
    Progress { path: PathBuf, reason: String },
    #[error("the initial prompt is empty")]
    EmptyPrompt,
    #[error("ledger has no initial prompt to resume from")]
    NothingToResume,
}

impl From<TrialError> for OptimizeError {
    fn from(e: TrialError) -> Self {
        match e {
            TrialError::Llm(e) => OptimizeError::Llm(e),
            other => OptimizeError::Trial(other),
        }
    }
}

impl From<GenError> for OptimizeError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Llm(e) => OptimizeError::Llm(e),
            other => OptimizeError::Gen(other),
        }
    }
}

/// The three model roles, each metered.
pub struct Backends {
    pub task: Metered,
    pub summarizer: Metered,
    pub generator: Metered,
}

impl Backends {
    pub fn new(task: Arc<dyn ChatBackend>, summarizer: Arc<dyn ChatBackend>, generator: Arc<dyn ChatBackend>) -> Self {
        Backends {
            task: Metered::new(task),
            summarizer: Metered::new(summarizer),
            generator: Metered::new(generator),
        }
    }

    /// Task role on one backend, both prompt roles on another.
    pub fn split(task: Arc<dyn ChatBackend>, prompt: Arc<dyn ChatBackend>) -> Self {
        Self::new(task, prompt.clone(), prompt)
    }

    pub fn calls(&self) -> CallCounts {
        CallCounts {
            task: self.task.completed(),
            summarizer: self.summarizer.completed(),
            generator: self.generator.completed(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub task: usize,
    pub summarizer: usize,
    pub generator: usize,
}

/// What happened at one level.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub parents: Vec<PromptId>,
    /// Candidate slots opened per parent, in parent order.
    pub slots_per_parent: Vec<usize>,
    pub generator_calls: usize,
    pub surrogate_fitted: bool,
    pub accept_calls: usize,
    pub rejected: usize,
    pub skipped_slots: usize,
    pub evaluated: Vec<PromptId>,
    pub level_max: Option<f64>,
    pub ledger_max: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub completed_levels: usize,
    pub stagnant_levels: usize,
    pub finished: bool,
    /// Best score among each level's own prompts; `None` for empty levels.
    pub per_level_max: Vec<Option<f64>>,
}

impl Progress {
    pub fn path_for(ledger: &Path) -> PathBuf {
        let mut name = ledger.as_os_str().to_owned();
        name.push(".progress.json");
        PathBuf::from(name)
    }

    /// Rebuilds what the ledger allows, then trusts the file for empty
    /// levels and the finished flag.
    fn reconcile(ledger: &Ledger, file: Option<Progress>, cfg: &RunConfig) -> Progress {
        let top = ledger.records().iter().map(|r| r.prompt.level).max().map_or(0, |l| l + 1);
        let mut p = file.unwrap_or_default();
        let levels = p.completed_levels.max(top);
        p.per_level_max.resize(levels, None);
        for (level, slot) in p.per_level_max.iter_mut().enumerate() {
            *slot = ledger
                .records()
                .iter()
                .filter(|r| r.prompt.level == level)
                .map(|r| r.mean_score)
                .reduce(f64::max);
        }
        p.completed_levels = levels;
        let mut running = f64::NEG_INFINITY;
        p.stagnant_levels = 0;
        for (level, m) in p.per_level_max.iter().enumerate() {
            let improved = m.is_some_and(|m| m > running + IMPROVEMENT_EPS);
            if let Some(m) = m {
                running = running.max(*m);
            }
            if level > 0 {
                p.stagnant_levels = if improved { 0 } else { p.stagnant_levels + 1 };
            }
        }
        p.finished = p.finished || p.stagnant_levels >= cfg.stagnation_patience || levels >= cfg.max_depth;
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub best_prompt: String,
    pub best_score: f64,
    pub per_level_max: Vec<Option<f64>>,
    pub prompts_evaluated: usize,
    pub calls_by_backend: CallCounts,
}

impl RunReport {
    /// Plain-text evolution curve: level against the best score so far.
    pub fn curve_table(&self) -> String {
        let mut out = String::from("level  level_max  best_so_far\n");
        let mut best = f64::NEG_INFINITY;
        for (level, m) in self.per_level_max.iter().enumerate() {
            if let Some(m) = m {
                best = best.max(*m);
            }
            let shown = m.map_or_else(|| "-".to_string(), |m| format!("{m:.4}"));
            let _ = writeln!(out, "{level:>5}  {shown:>9}  {best:>11.4}");
        }
        out
    }
}

pub struct RunOutcome {
    pub best: PromptRecord,
    pub levels: Vec<LevelStats>,
    pub progress: Progress,
    pub report: RunReport,
}

pub struct Optimizer<'a> {
    pub cfg: &'a RunConfig,
    pub instances: &'a [EnvInstance],
    pub templates: &'a FeedbackTemplates,
    pub meta: &'a MetaPrompts,
    pub backends: &'a Backends,
    pub predictor: &'a dyn PredictorKind,
    pub dump_dir: Option<PathBuf>,
}

fn parent_seed(seed: u64, level: usize, id: &PromptId) -> u64 {
    let h = id.0.bytes().fold(0u64, |acc, b| splitmix64(acc ^ u64::from(b)));
    splitmix64(seed ^ splitmix64(level as u64 ^ splitmix64(h)))
}

impl Optimizer<'_> {
    fn evaluator(&self) -> Result<Evaluator<'_>, OptimizeError> {
        Ok(Evaluator::new(self.instances, &self.backends.task, self.templates, self.cfg)?.with_dump_dir(self.dump_dir.clone()))
    }

    /// Fresh run from `initial`. With a path, the ledger file is created
    /// (truncating any old one) and progress is saved beside it.
    pub fn optimize(&self, initial: &str, ledger_path: Option<&Path>) -> Result<RunOutcome, OptimizeError> {
        self.cfg.validate()?;
        if initial.trim().is_empty() {
            return Err(OptimizeError::EmptyPrompt);
        }
        let mut ledger = match ledger_path {
            Some(p) => Ledger::create(p)?,
            None => Ledger::in_memory(),
        };
        if let Some(p) = ledger_path {
            let _ = std::fs::remove_file(Progress::path_for(p));
        }
        let eval = self.evaluator()?.evaluate(&PromptId::from_seq(0).0, initial)?;
        let root = Prompt {
            id: PromptId::from_seq(0),
            parent_id: None,
            level: 0,
            text: initial.to_string(),
        };
        ledger.record(PromptRecord::new(root, eval.per_trial_scores, eval.feedback, Vec::new()))?;
        let progress = Progress::reconcile(&ledger, None, self.cfg);
        self.save_progress(ledger_path, &progress)?;
        self.drive(&mut ledger, ledger_path, progress)
    }

    /// Continue the run stored at `ledger_path` from its next level.
    pub fn resume(&self, ledger_path: &Path) -> Result<RunOutcome, OptimizeError> {
        self.cfg.validate()?;
        let mut ledger = Ledger::open(ledger_path)?;
        if ledger.is_empty() {
            return Err(OptimizeError::NothingToResume);
        }
        let path = Progress::path_for(ledger_path);
        let file = match std::fs::read_to_string(&path) {
            Ok(text) => Some(serde_json::from_str(&text).map_err(|e| OptimizeError::Progress {
                path: path.clone(),
                reason: e.to_string(),
            })?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => {
                return Err(OptimizeError::Progress {
                    path,
                    reason: e.to_string(),
                })
            }
        };
        let progress = Progress::reconcile(&ledger, file, self.cfg);
        self.drive(&mut ledger, Some(ledger_path), progress)
    }

    fn save_progress(&self, ledger_path: Option<&Path>, progress: &Progress) -> Result<(), OptimizeError> {
        let Some(p) = ledger_path else { return Ok(()) };
        let path = Progress::path_for(p);
        let text = serde_json::to_string_pretty(progress).expect("progress serializes");
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| OptimizeError::Progress {
                path,
                reason: e.to_string(),
            })
    }

    fn drive(
        &self,
        ledger: &mut Ledger,
        ledger_path: Option<&Path>,
        mut progress: Progress,
    ) -> Result<RunOutcome, OptimizeError> {
        let mut levels = Vec::new();
        while !progress.finished {
            let level = progress.completed_levels;
            let stats = self.run_level(ledger, level)?;
            progress.completed_levels += 1;
            progress.per_level_max.push(stats.level_max);
            progress.stagnant_levels = if stats.improved { 0 } else { progress.stagnant_levels + 1 };
            progress.finished =
                progress.stagnant_levels >= self.cfg.stagnation_patience || progress.completed_levels >= self.cfg.max_depth;
            self.save_progress(ledger_path, &progress)?;
            tracing::info!(
                level,
                evaluated = stats.evaluated.len(),
                ledger_max = stats.ledger_max,
                "level done"
            );
            levels.push(stats);
        }
        let best = ledger.best()?.clone();
        let report = RunReport {
            best_prompt: best.prompt.text.clone(),
            best_score: best.mean_score,
            per_level_max: progress.per_level_max.clone(),
            prompts_evaluated: ledger.len(),
            calls_by_backend: self.backends.calls(),
        };
        Ok(RunOutcome {
            best,
            levels,
            progress,
            report,
        })
    }

    fn fit(&self, ledger: &Ledger, level: usize) -> Result<Option<SurrogateEnsemble>, OptimizeError> {
        match fit_ensemble(
            &ledger.dataset(),
            splitmix64(self.cfg.rng_seed ^ 0x5eed ^ level as u64),
            self.predictor,
        ) {
            Ok(e) => Ok(Some(e)),
            Err(SurrogateError::InsufficientData { have }) => {
                tracing::warn!(level, have, "too few scored prompts; candidates are not filtered");
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn run_level(&self, ledger: &mut Ledger, level: usize) -> Result<LevelStats, OptimizeError> {
        let cfg = self.cfg;
        let parents: Vec<PromptRecord> = ledger.top_k(cfg.beam_width)?.into_iter().cloned().collect();
        let ledger_max_before = ledger.max_score()?;
        let n = cfg.expansion_at(level);
        let ensemble = if level >= cfg.surrogate_start {
            self.fit(ledger, level)?
        } else {
            None
        };
        let gen = Generator {
            meta: self.meta,
            summarizer: &self.backends.summarizer,
            generator: &self.backends.generator,
            max_reply_tokens: cfg.max_reply_tokens,
        };
        let mut stats = LevelStats {
            level,
            parents: parents.iter().map(|p| p.id().clone()).collect(),
            surrogate_fitted: ensemble.is_some(),
            ..LevelStats::default()
        };
        let mut taken: HashSet<String> = ledger.records().iter().map(|r| r.prompt.text.clone()).collect();
        let mut pending: Vec<(Prompt, Vec<String>)> = Vec::new();
        for parent in &parents {
            let mut rng = ChaCha8Rng::seed_from_u64(parent_seed(cfg.rng_seed, level, parent.id()));
            let cap = if ensemble.is_some() { 3 * n } else { n };
            let mut accepted = 0;
            let mut slots = 0;
            while accepted < n && slots < cap {
                slots += 1;
                let proposal = gen.propose(parent, &mut rng, &|t: &str| taken.contains(t))?;
                stats.generator_calls += proposal.generator_calls;
                let Some(text) = proposal.text else {
                    stats.skipped_slots += 1;
                    continue;
                };
                if let Some(e) = &ensemble {
                    stats.accept_calls += 1;
                    if !e.accept_candidate(&text, cfg.hyper_m, ledger_max_before)? {
                        stats.rejected += 1;
                        continue;
                    }
                }
                accepted += 1;
                taken.insert(text.clone());
                let id = PromptId::from_seq(ledger.len() + pending.len());
                let prompt = Prompt {
                    id,
                    parent_id: Some(parent.id().clone()),
                    level,
                    text,
                };
                pending.push((prompt, parent.child_ancestors()));
            }
            stats.slots_per_parent.push(slots);
        }
        let prompts: Vec<(&str, &str)> = pending.iter().map(|(p, _)| (p.id.0.as_str(), p.text.as_str())).collect();
        let evals = self.evaluator()?.evaluate_many(&prompts)?;
        for ((prompt, ancestors), eval) in pending.into_iter().zip(evals) {
            stats.evaluated.push(prompt.id.clone());
            ledger.record(PromptRecord::new(prompt, eval.per_trial_scores, eval.feedback, ancestors))?;
        }
        stats.level_max = ledger
            .records()
            .iter()
            .filter(|r| r.prompt.level == level)
            .map(|r| r.mean_score)
            .reduce(f64::max);
        stats.ledger_max = ledger.max_score()?;
        stats.improved = stats.ledger_max > ledger_max_before + IMPROVEMENT_EPS;
        Ok(stats)
    }
}
