//! Built-in predictor: ridge regression over hashed word unigram and bigram
//! frequencies plus prompt length, solved in closed form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{mean_absolute_error, split_4_1, Predictor, PredictorKind, SurrogateError, TrainedMember};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h ^= 0x1f;
            h = h.wrapping_mul(FNV_PRIME);
        }
        for b in p.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Feature vector: `buckets` hashed unigram frequencies, `buckets` hashed
/// bigram frequencies, then a log-length term.
pub fn features(text: &str, buckets: usize) -> Vec<f64> {
    let toks = tokens(text);
    let mut v = vec![0.0; 2 * buckets + 1];
    if !toks.is_empty() {
        let uw = 1.0 / toks.len() as f64;
        for t in &toks {
            v[(fnv1a(&[t]) % buckets as u64) as usize] += uw;
        }
        if toks.len() > 1 {
            let bw = 1.0 / (toks.len() - 1) as f64;
            for w in toks.windows(2) {
                v[buckets + (fnv1a(&[&w[0], &w[1]]) % buckets as u64) as usize] += bw;
            }
        }
    }
    v[2 * buckets] = (1.0 + toks.len() as f64).ln() / 10.0;
    v
}

#[derive(Debug, Clone)]
pub struct RidgeKind {
    pub buckets: usize,
    /// Candidate regularisation strengths; the one with the lowest
    /// leave-one-out error on the training part wins.
    pub lambdas: Vec<f64>,
}

impl Default for RidgeKind {
    fn default() -> Self {
        RidgeKind {
            buckets: 1024,
            lambdas: (-4..=2).flat_map(|e| [1.0, 3.0].map(|m| m * 10f64.powi(e))).collect(),
        }
    }
}

/// Dual-form ridge model: prediction is `offset + k(x)ᵀ alpha` with the
/// linear kernel over training features.
#[derive(Debug, Clone)]
pub struct RidgeModel {
    buckets: usize,
    train: DMatrix<f64>,
    alpha: DVector<f64>,
    offset: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn fit(pairs: &[(&str, f64)], kind: &RidgeKind) -> Result<Self, SurrogateError> {
        let n = pairs.len();
        if n == 0 {
            return Err(SurrogateError::Numeric("no training pairs".into()));
        }
        let dim = 2 * kind.buckets + 1;
        let rows: Vec<f64> = pairs.iter().flat_map(|(t, _)| features(t, kind.buckets)).collect();
        let x = DMatrix::from_row_slice(n, dim, &rows);
        let offset = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
        let y = DVector::from_iterator(n, pairs.iter().map(|p| p.1 - offset));
        let gram = &x * x.transpose();
        let eig = SymmetricEigen::new(gram);
        let qty = eig.eigenvectors.transpose() * &y;
        let mut best: Option<(f64, f64)> = None;
        for &lambda in &kind.lambdas {
            let shrink = eig.eigenvalues.map(|l| l.max(0.0) / (l.max(0.0) + lambda));
            let fitted = &eig.eigenvectors * qty.component_mul(&shrink);
            let mut loo = 0.0;
            for i in 0..n {
                let h: f64 = (0..n).map(|j| eig.eigenvectors[(i, j)].powi(2) * shrink[j]).sum();
                let r = (y[i] - fitted[i]) / (1.0 - h).max(1e-9);
                loo += r * r;
            }
            if best.is_none_or(|(_, b)| loo < b) {
                best = Some((lambda, loo));
            }
        }
        let (lambda, _) = best.ok_or_else(|| SurrogateError::Numeric("no regularisation candidates".into()))?;
        let inv = eig.eigenvalues.map(|l| 1.0 / (l.max(0.0) + lambda));
        let alpha = &eig.eigenvectors * qty.component_mul(&inv);
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(SurrogateError::Numeric("ridge solve produced non-finite weights".into()));
        }
        Ok(RidgeModel {
            buckets: kind.buckets,
            train: x,
            alpha,
            offset,
            lambda,
        })
    }

    pub fn predict_one(&self, text: &str) -> f64 {
        let f = DVector::from_vec(features(text, self.buckets));
        let k = &self.train * f;
        self.offset + k.dot(&self.alpha)
    }
}

impl Predictor for RidgeModel {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>, SurrogateError> {
        Ok(texts.iter().map(|t| self.predict_one(t)).collect())
    }
}

impl PredictorKind for RidgeKind {
    fn train_member(&self, pairs: &[(String, f64)], seed: u64) -> Result<TrainedMember, SurrogateError> {
        let (train, test) = split_4_1(pairs.len(), seed);
        let train_pairs: Vec<(&str, f64)> = train.iter().map(|&i| (pairs[i].0.as_str(), pairs[i].1)).collect();
        let model = RidgeModel::fit(&train_pairs, self)?;
        let predicted: Vec<f64> = test.iter().map(|&i| model.predict_one(&pairs[i].0).clamp(0.0, 1.0)).collect();
        let actual: Vec<f64> = test.iter().map(|&i| pairs[i].1).collect();
        Ok(TrainedMember {
            heldout_error: mean_absolute_error(&predicted, &actual),
            predictor: Box::new(model),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::fit_ensemble;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FILLER: [&str; 12] = [
        "plan", "the", "boxes", "agents", "lift", "step", "each", "move", "goal", "avoid", "check", "state",
    ];

    pub(crate) fn careful_pairs(n: usize, seed: u64) -> Vec<(String, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let c = rng.random_range(0..=20);
                let mut words: Vec<&str> = (0..20).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
                for w in words.iter_mut().take(c) {
                    *w = "careful";
                }
                (words.join(" "), c as f64 / 20.0)
            })
            .collect()
    }

    #[test]
    fn features_are_frequencies() {
        let f = features("Be careful, be CAREFUL.", 64);
        assert!((f[..64].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((f[64..128].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(features("", 8)[16], 0.0);
    }

    #[test]
    fn learns_token_frequency() {
        let pairs = careful_pairs(100, 1);
        let e = fit_ensemble(&pairs, 7, &RidgeKind::default()).unwrap();
        assert!(e.mean_heldout_error() < 0.1, "{:?}", e.heldout_errors);
    }

    #[test]
    fn constant_targets() {
        let pairs: Vec<(String, f64)> = careful_pairs(30, 2).into_iter().map(|(t, _)| (t, 0.5)).collect();
        let e = fit_ensemble(&pairs, 0, &RidgeKind::default()).unwrap();
        assert!(e.heldout_errors.iter().all(|&x| x < 1e-9));
        let (m, v) = e.predict_stats("anything at all").unwrap();
        assert!((m - 0.5).abs() < 1e-9 && v < 1e-12);
    }

    #[test]
    fn bit_reproducible() {
        let pairs = careful_pairs(40, 3);
        let a = fit_ensemble(&pairs, 11, &RidgeKind::default()).unwrap();
        let b = fit_ensemble(&pairs, 11, &RidgeKind::default()).unwrap();
        assert_eq!(a.heldout_errors, b.heldout_errors);
        let t = "careful plan careful";
        assert_eq!(a.member_outputs(t).unwrap(), b.member_outputs(t).unwrap());
    }
}
