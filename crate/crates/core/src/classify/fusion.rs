//! Linear softmax head over concatenated text features, cue values and
//! (optionally) imported utterance embeddings.

use serde::{Deserialize, Serialize};

use super::boost::softmax;
use super::{check_training_set, class_count, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the loss improves by less than this between epochs.
    pub tolerance: f64,
    pub l2: f64,
    /// Weight each class by `n / (k * n_c)` in the loss.
    pub class_weights: bool,
    pub n_classes: Option<usize>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            learning_rate: 0.5,
            max_epochs: 500,
            tolerance: 1e-6,
            l2: 1e-3,
            class_weights: false,
            n_classes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    /// `weights[class][feature]`, applied to standardized inputs.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub epochs: usize,
    pub final_loss: f64,
}

impl FusionModel {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn logits(&self, z: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(z).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }
}

impl Classifier for FusionModel {
    fn n_classes(&self) -> usize {
        self.bias.len()
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(&self.standardize(x)))
    }
}

/// Full-batch gradient descent on the (optionally class-weighted) mean
/// cross-entropy plus an L2 penalty on the weights.
// Negated comparisons also reject NaN parameters.
#[allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub fn train_fusion(x: &[Vec<f64>], y: &[usize], config: &FusionConfig) -> Result<FusionModel> {
    check_training_set(x, y)?;
    if !(config.learning_rate > 0.0) || config.l2 < 0.0 {
        return Err(Error::InvalidParameter(
            "fusion learning_rate must be positive and l2 non-negative".into(),
        ));
    }
    let n = x.len();
    let d = x[0].len();
    let k = config.n_classes.unwrap_or(0).max(class_count(y));

    let mut mean = vec![0.0; d];
    for r in x {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut scale = vec![0.0; d];
    for r in x {
        for j in 0..d {
            scale[j] += (r[j] - mean[j]).powi(2) / n as f64;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }

    let mut counts = vec![0.0; k];
    for &c in y {
        counts[c] += 1.0;
    }
    let sample_weight: Vec<f64> = y
        .iter()
        .map(|&c| {
            if config.class_weights {
                n as f64 / (k as f64 * counts[c])
            } else {
                1.0
            }
        })
        .collect();
    let weight_total: f64 = sample_weight.iter().sum();

    let mut model = FusionModel {
        weights: vec![vec![0.0; d]; k],
        bias: vec![0.0; k],
        mean,
        scale,
        epochs: 0,
        final_loss: f64::NAN,
    };
    let z: Vec<Vec<f64>> = x.iter().map(|r| model.standardize(r)).collect();

    let mut prev_loss = f64::INFINITY;
    for epoch in 0..config.max_epochs {
        let mut gw = vec![vec![0.0; d]; k];
        let mut gb = vec![0.0; k];
        let mut loss = 0.0;
        for ((zi, &yi), &wi) in z.iter().zip(y).zip(&sample_weight) {
            let p = softmax(&model.logits(zi));
            loss -= wi * p[yi].max(1e-300).ln();
            for c in 0..k {
                let g = wi * (p[c] - f64::from(u8::from(c == yi)));
                gb[c] += g;
                for (a, v) in gw[c].iter_mut().zip(zi) {
                    *a += g * v;
                }
            }
        }
        loss /= weight_total;
        let penalty: f64 = model.weights.iter().flatten().map(|w| w * w).sum::<f64>();
        loss += 0.5 * config.l2 * penalty;
        model.epochs = epoch;
        model.final_loss = loss;
        if prev_loss - loss < config.tolerance {
            break;
        }
        prev_loss = loss;

        for c in 0..k {
            model.bias[c] -= config.learning_rate * gb[c] / weight_total;
            for j in 0..d {
                let g = gw[c][j] / weight_total + config.l2 * model.weights[c][j];
                model.weights[c][j] -= config.learning_rate * g;
            }
        }
        model.epochs = epoch + 1;
    }
    Ok(model)
}
