//! Learned score filter: an ensemble of five score predictors trained on the
//! ledger's (prompt, score) pairs, and the acceptance rule that turns their
//! mean, variance and held-out error into an evaluate-or-skip decision.

mod external;
mod ridge;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use external::{ExternalKind, Transport};
pub use ridge::{features, RidgeKind, RidgeModel};

pub const MEMBERS: usize = 5;
pub const MIN_PAIRS: usize = 10;
/// Slack on the acceptance comparison so that ties computed in different
/// orders agree.
pub const ACCEPT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("need at least {MIN_PAIRS} scored prompts to train, have {have}")]
    InsufficientData { have: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("external predictor: {0}")]
    Adapter(String),
    #[error("external predictor timed out during {op}")]
    Timeout { op: &'static str },
    #[error("external predictor I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub trait Predictor: Send + Sync {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>, SurrogateError>;
}

pub struct TrainedMember {
    pub predictor: Box<dyn Predictor>,
    pub heldout_error: f64,
}

/// A way of training one ensemble member. Members given the same pairs and
/// seed must come out the same.
pub trait PredictorKind: Send + Sync {
    fn train_member(&self, pairs: &[(String, f64)], seed: u64) -> Result<TrainedMember, SurrogateError>;
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded 4:1 split of `0..n` into (train, test) index sets.
pub fn split_4_1(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = (n / 5).max(1).min(n.saturating_sub(1));
    let train = idx.split_off(test);
    (train, idx)
}

pub fn mean_absolute_error(predicted: &[f64], actual: &[f64]) -> f64 {
    predicted.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / actual.len().max(1) as f64
}

/// Mean and population variance of member outputs, each clamped to [0, 1].
pub fn member_stats(outputs: &[f64]) -> (f64, f64) {
    let n = outputs.len() as f64;
    let clamped: Vec<f64> = outputs.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mean = clamped.iter().sum::<f64>() / n;
    let var = clamped.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// The acceptance rule: predicted mean plus variance plus mean held-out
/// error must reach `hyper_m` times the best score recorded so far.
pub fn accepts(mean: f64, variance: f64, heldout_error: f64, hyper_m: f64, ledger_max: f64) -> bool {
    mean + variance + heldout_error >= hyper_m * ledger_max - ACCEPT_TOLERANCE
}

pub struct SurrogateEnsemble {
    members: Vec<Box<dyn Predictor>>,
    pub heldout_errors: Vec<f64>,
    pub train_size: usize,
}

impl SurrogateEnsemble {
    pub fn from_members(members: Vec<TrainedMember>, train_size: usize) -> Self {
        let (members, heldout_errors) = members.into_iter().map(|m| (m.predictor, m.heldout_error)).unzip();
        SurrogateEnsemble {
            members,
            heldout_errors,
            train_size,
        }
    }

    pub fn mean_heldout_error(&self) -> f64 {
        self.heldout_errors.iter().sum::<f64>() / self.heldout_errors.len().max(1) as f64
    }

    /// Raw, unclamped outputs of each member for one text.
    pub fn member_outputs(&self, text: &str) -> Result<Vec<f64>, SurrogateError> {
        let texts = [text.to_string()];
        self.members
            .iter()
            .map(|m| {
                m.predict(&texts)?
                    .first()
                    .copied()
                    .ok_or_else(|| SurrogateError::Adapter("empty prediction".into()))
            })
            .collect()
    }

    pub fn predict_stats(&self, text: &str) -> Result<(f64, f64), SurrogateError> {
        Ok(member_stats(&self.member_outputs(text)?))
    }

    pub fn accept_candidate(&self, text: &str, hyper_m: f64, ledger_max: f64) -> Result<bool, SurrogateError> {
        let (mean, var) = self.predict_stats(text)?;
        Ok(accepts(mean, var, self.mean_heldout_error(), hyper_m, ledger_max))
    }
}

/// Trains five members, each on its own seeded 4:1 split, in parallel.
pub fn fit_ensemble(pairs: &[(String, f64)], seed: u64, kind: &dyn PredictorKind) -> Result<SurrogateEnsemble, SurrogateError> {
    if pairs.len() < MIN_PAIRS {
        return Err(SurrogateError::InsufficientData { have: pairs.len() });
    }
    let members = (0..MEMBERS as u64)
        .into_par_iter()
        .map(|k| kind.train_member(pairs, splitmix64(seed ^ splitmix64(k))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SurrogateEnsemble::from_members(members, pairs.len()))
}
