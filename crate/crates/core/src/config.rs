use promst_envs::ScoreMode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Trial quantity penalised by the modified scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFactor {
    #[default]
    StepCount,
    CollisionCount,
}

impl std::str::FromStr for ScoreFactor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "step_count" => Ok(ScoreFactor::StepCount),
            "collision_count" => Ok(ScoreFactor::CollisionCount),
            _ => Err(format!("unknown score factor '{s}' (expected step_count or collision_count)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid run config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Parents expanded per level (k).
    pub beam_width: usize,
    /// Candidates per parent at level 1.
    pub expansion_first: usize,
    /// Candidates per parent after level 1.
    pub expansion_rest: usize,
    /// First level at which the score filter is applied.
    pub surrogate_start: usize,
    pub hyper_m: f64,
    /// Levels including the initial prompt's level 0.
    pub max_depth: usize,
    pub stagnation_patience: usize,
    pub trials_per_prompt: usize,
    pub max_rounds_per_trial: usize,
    /// Past (observation, action, feedback) tuples kept in the task context.
    pub history_window: usize,
    pub rng_seed: u64,
    pub score_mode: ScoreMode,
    pub preference_ratio: f64,
    pub preference_factor: ScoreFactor,
    pub temperature: f64,
    pub max_reply_tokens: usize,
    pub request_timeout_secs: u64,
    /// Same (state, action) pair seen this many times ends the trial.
    pub loop_repeat_threshold: usize,
    /// Consecutive steps without a state change that end the trial.
    pub loop_unchanged_limit: usize,
    /// Extra attempts for a trial whose backend call failed.
    pub trial_retries: usize,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            beam_width: 5,
            expansion_first: 20,
            expansion_rest: 8,
            surrogate_start: 4,
            hyper_m: 0.8,
            max_depth: 10,
            stagnation_patience: 3,
            trials_per_prompt: 10,
            max_rounds_per_trial: 30,
            history_window: 8,
            rng_seed: 0,
            score_mode: ScoreMode::Progress,
            preference_ratio: 0.0,
            preference_factor: ScoreFactor::StepCount,
            temperature: 0.0,
            max_reply_tokens: 1024,
            request_timeout_secs: 60,
            loop_repeat_threshold: 3,
            loop_unchanged_limit: 6,
            trial_retries: 2,
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let counts = [
            ("beam_width", self.beam_width),
            ("expansion_first", self.expansion_first),
            ("expansion_rest", self.expansion_rest),
            ("surrogate_start", self.surrogate_start),
            ("max_depth", self.max_depth),
            ("stagnation_patience", self.stagnation_patience),
            ("trials_per_prompt", self.trials_per_prompt),
            ("max_rounds_per_trial", self.max_rounds_per_trial),
            ("history_window", self.history_window),
            ("max_reply_tokens", self.max_reply_tokens),
            ("loop_repeat_threshold", self.loop_repeat_threshold),
            ("loop_unchanged_limit", self.loop_unchanged_limit),
            ("jobs", self.jobs),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError(format!("{name} must be at least 1")));
        }
        if !self.hyper_m.is_finite() || self.hyper_m < 0.0 {
            return Err(ConfigError("hyper_m must be a non-negative number".into()));
        }
        if !self.preference_ratio.is_finite() || self.preference_ratio < 0.0 {
            return Err(ConfigError("preference_ratio must be a non-negative number".into()));
        }
        if self.temperature != 0.0 {
            return Err(ConfigError("temperature is fixed to 0".into()));
        }
        Ok(())
    }

    pub fn expansion_at(&self, level: usize) -> usize {
        if level <= 1 {
            self.expansion_first
        } else {
            self.expansion_rest
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
