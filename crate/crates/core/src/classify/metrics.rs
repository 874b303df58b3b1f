use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Rows are gold classes, columns predictions.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub fold_accuracy: Vec<f64>,
    pub fold_macro_f1: Vec<f64>,
    pub accuracy_mean: f64,
    /// Sample standard deviation (n - 1).
    pub accuracy_sd: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_sd: f64,
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl CvSummary {
    pub fn from_folds(fold_accuracy: Vec<f64>, fold_macro_f1: Vec<f64>) -> Self {
        let (accuracy_mean, accuracy_sd) = mean_sd(&fold_accuracy);
        let (macro_f1_mean, macro_f1_sd) = mean_sd(&fold_macro_f1);
        CvSummary {
            fold_accuracy,
            fold_macro_f1,
            accuracy_mean,
            accuracy_sd,
            macro_f1_mean,
            macro_f1_sd,
        }
    }
}

/// Evaluation over the four understanding states.
pub fn evaluate(predictions: &[usize], gold: &[usize]) -> Result<EvaluationReport> {
    evaluate_n(predictions, gold, crate::corpus::UnderstandingState::COUNT)
}

pub fn evaluate_n(
    predictions: &[usize],
    gold: &[usize],
    n_classes: usize,
) -> Result<EvaluationReport> {
    if predictions.len() != gold.len() {
        return Err(Error::InvalidParameter(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    if let Some(bad) = predictions.iter().chain(gold).find(|&&c| c >= n_classes) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} outside 0..{n_classes}"
        )));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &g) in predictions.iter().zip(gold) {
        confusion[g][p] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let mut undefined = false;
            let mut ratio = |num: f64, den: usize| {
                if den == 0 {
                    undefined = true;
                    0.0
                } else {
                    num / den as f64
                }
            };
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
                undefined,
            }
        })
        .collect();
    let total = gold.len();
    let trace: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    Ok(EvaluationReport {
        macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / n_classes as f64,
        accuracy: if total == 0 {
            0.0
        } else {
            trace as f64 / total as f64
        },
        per_class,
        confusion,
    })
}
