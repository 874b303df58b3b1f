//! Bagged Gini trees with sqrt(F) feature sampling and majority voting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Binned, Gini, GrowParams, Tree, DEFAULT_MAX_BINS};
use super::{check_training_set, class_count, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
    /// Output width; inferred from the labels when `None`.
    pub n_classes: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 1,
            seed: 0,
            n_classes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree<Vec<f64>>>,
    /// Seed each tree was grown from.
    pub tree_seeds: Vec<u64>,
    pub n_classes: usize,
}

/// Per-tree seed; depends only on the forest seed and the tree index.
pub(crate) fn derive_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn train_forest(x: &[Vec<f64>], y: &[usize], config: &ForestConfig) -> Result<ForestModel> {
    check_training_set(x, y)?;
    if config.n_trees == 0 || config.max_depth == 0 || config.min_leaf == 0 {
        return Err(Error::InvalidParameter(
            "forest n_trees, max_depth and min_leaf must be positive".into(),
        ));
    }
    let n_classes = config.n_classes.unwrap_or(0).max(class_count(y));
    let data = Binned::new(x, DEFAULT_MAX_BINS);
    let n_features = data.features();
    let max_features = ((n_features as f64).sqrt().ceil() as usize).max(1);
    let crit = Gini {
        labels: y,
        n_classes,
    };
    let params = GrowParams {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        max_features: Some(max_features),
    };

    let n = data.rows();
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut tree_seeds = Vec::with_capacity(config.n_trees);
    for i in 0..config.n_trees {
        let seed = derive_seed(config.seed, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        trees.push(grow(&data, rows, &crit, params, &mut rng));
        tree_seeds.push(seed);
    }
    Ok(ForestModel {
        trees,
        tree_seeds,
        n_classes,
    })
}

impl ForestModel {
    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        let mut votes = vec![0; self.n_classes];
        for t in &self.trees {
            votes[super::argmax(t.leaf(x))] += 1;
        }
        votes
    }
}

impl Classifier for ForestModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Vote shares.
    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let total = self.trees.len() as f64;
        self.votes(x)
            .into_iter()
            .map(|v| v as f64 / total)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::testdata::{blobs, separable_1d};

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = separable_1d(60);
        let cfg = ForestConfig {
            n_trees: 50,
            ..Default::default()
        };
        let m = train_forest(&x, &y, &cfg).unwrap();
        assert_eq!(m.predict_all(&x), y);
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, y) = blobs(20, 0.3, 3);
        let cfg = ForestConfig {
            n_trees: 20,
            seed: 11,
            ..Default::default()
        };
        let a = train_forest(&x, &y, &cfg).unwrap();
        let b = train_forest(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blobs_generalize() {
        let (x, y) = blobs(50, 0.1, 1);
        let (xt, yt) = blobs(50, 0.1, 2);
        let m = train_forest(&x, &y, &ForestConfig::default()).unwrap();
        let correct = m
            .predict_all(&xt)
            .iter()
            .zip(&yt)
            .filter(|(a, b)| a == b)
            .count();
        assert!(correct as f64 / yt.len() as f64 >= 0.95);
    }

    #[test]
    fn tree_order_does_not_matter() {
        let (x, y) = blobs(20, 0.4, 5);
        let cfg = ForestConfig {
            n_trees: 15,
            ..Default::default()
        };
        let m = train_forest(&x, &y, &cfg).unwrap();
        let mut rev = m.clone();
        rev.trees.reverse();
        assert_eq!(m.predict_all(&x), rev.predict_all(&x));
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(train_forest(&x, &[1, 1], &ForestConfig::default()).is_err());
    }
}
