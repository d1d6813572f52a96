//! Sub-goal progress score and the preference-weighted variants.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Plain completed/total ratio.
    #[default]
    Progress,
    /// `base - ratio * factor`; may go below zero.
    ModifiedSubtractive,
    /// `base / (1 + ratio * factor)`.
    ModifiedDivisive,
}

/// Fraction of completed sub-goals. `subgoals_total` must be positive.
pub fn progress_score(subgoals_done: usize, subgoals_total: usize) -> f64 {
    debug_assert!(subgoals_total > 0);
    debug_assert!(subgoals_done <= subgoals_total);
    subgoals_done as f64 / subgoals_total as f64
}

/// Penalise `base` by a user-chosen factor such as the step count.
///
/// No clamping is applied: the subtractive form can go negative.
pub fn modified_score(base: f64, factor_value: f64, ratio: f64, mode: ScoreMode) -> f64 {
    match mode {
        ScoreMode::Progress => base,
        ScoreMode::ModifiedSubtractive => base - ratio * factor_value,
        ScoreMode::ModifiedDivisive => base / (1.0 + ratio * factor_value),
    }
}
