//! Multiclass gradient boosting on the softmax cross-entropy: each round fits
//! one second-order regression tree per class.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::derive_seed;
use super::tree::{grow, Binned, GrowParams, SecondOrder, Tree, DEFAULT_MAX_BINS};
use super::{check_training_set, class_count, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub n_rounds: usize,
    pub depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf values.
    pub l2: f64,
    /// Row fraction sampled per round (without replacement).
    pub subsample: f64,
    pub seed: u64,
    pub n_classes: Option<usize>,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            n_rounds: 60,
            depth: 3,
            learning_rate: 0.3,
            l2: 1.0,
            subsample: 1.0,
            seed: 0,
            n_classes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    /// Initial per-class scores (log class priors).
    pub base_scores: Vec<f64>,
    /// `rounds[r][class]`
    pub rounds: Vec<Vec<Tree<f64>>>,
    pub learning_rate: f64,
    pub n_classes: usize,
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

// Negated comparisons also reject NaN parameters.
#[allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub fn train_boosted(x: &[Vec<f64>], y: &[usize], config: &BoostConfig) -> Result<BoostedModel> {
    check_training_set(x, y)?;
    if config.depth == 0
        || !(config.learning_rate >= 0.0)
        || !(config.subsample > 0.0 && config.subsample <= 1.0)
    {
        return Err(Error::InvalidParameter(
            "boosting needs depth > 0, learning_rate >= 0 and subsample in (0, 1]".into(),
        ));
    }
    let n_classes = config.n_classes.unwrap_or(0).max(class_count(y));
    let n = x.len();
    let mut prior = vec![0.0; n_classes];
    for &c in y {
        prior[c] += 1.0;
    }
    // Absent classes get a tiny prior instead of -inf.
    let base_scores: Vec<f64> = prior
        .iter()
        .map(|&c| ((c + 1e-3) / (n as f64 + 1e-3 * n_classes as f64)).ln())
        .collect();

    let data = Binned::new(x, DEFAULT_MAX_BINS);
    let params = GrowParams {
        max_depth: config.depth,
        min_leaf: 1,
        max_features: None,
    };
    let mut scores: Vec<Vec<f64>> = vec![base_scores.clone(); n];
    let mut rounds = Vec::with_capacity(config.n_rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for r in 0..config.n_rounds {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, r));
        let rows: Vec<usize> = if config.subsample < 1.0 {
            let m = ((n as f64 * config.subsample).round() as usize).max(1);
            let mut v = index::sample(&mut rng, n, m).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..n).collect()
        };
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let mut trees = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            for i in 0..n {
                let p = probs[i][k];
                grad[i] = p - f64::from(u8::from(y[i] == k));
                hess[i] = (p * (1.0 - p)).max(1e-16);
            }
            let crit = SecondOrder {
                grad: &grad,
                hess: &hess,
                l2: config.l2,
            };
            trees.push(grow(&data, rows.clone(), &crit, params, &mut rng));
        }
        for (i, row) in x.iter().enumerate() {
            for (k, t) in trees.iter().enumerate() {
                scores[i][k] += config.learning_rate * t.leaf(row);
            }
        }
        rounds.push(trees);
    }
    Ok(BoostedModel {
        base_scores,
        rounds,
        learning_rate: config.learning_rate,
        n_classes,
    })
}

impl BoostedModel {
    pub fn raw_scores(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.base_scores.clone();
        for trees in &self.rounds {
            for (k, t) in trees.iter().enumerate() {
                s[k] += self.learning_rate * t.leaf(x);
            }
        }
        s
    }
}

impl Classifier for BoostedModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.raw_scores(x))
    }
}
