//! Understanding-state classifiers and their evaluation harness.

pub mod boost;
pub mod experiment;
pub mod forest;
pub mod fusion;
pub mod metrics;
pub mod split;
pub mod tfidf;
pub mod tree;

pub use boost::{train_boosted, BoostConfig, BoostedModel};
pub use experiment::{
    run_classification, usable_samples, ClassifierKind, ClassifierRun, ClassifyConfig, FeatureSet,
    Sample,
};
pub use forest::{train_forest, ForestConfig, ForestModel};
pub use fusion::{train_fusion, FusionConfig, FusionModel};
pub use metrics::{evaluate, CvSummary, EvaluationReport};
pub use split::{kfold_cv, stratified_folds, stratified_split};
pub use tfidf::TfidfVectorizer;

/// Dense row-major feature matrix.
pub type Matrix = Vec<Vec<f64>>;

pub trait Classifier {
    fn n_classes(&self) -> usize;

    fn predict_proba(&self, x: &[f64]) -> Vec<f64>;

    /// Most probable class; ties go to the smallest class index.
    fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.predict_proba(x))
    }

    fn predict_all(&self, rows: &[Vec<f64>]) -> Vec<usize> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn class_count(labels: &[usize]) -> usize {
    labels.iter().copied().max().map_or(0, |m| m + 1)
}

pub(crate) fn check_training_set(x: &[Vec<f64>], y: &[usize]) -> crate::Result<()> {
    use crate::Error;
    if x.len() != y.len() {
        return Err(Error::InvalidParameter(format!(
            "{} rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Degenerate("empty training set".into()));
    }
    let width = x[0].len();
    if x.iter().any(|r| r.len() != width) {
        return Err(Error::InvalidParameter("rows differ in dimension".into()));
    }
    let first = y[0];
    if y.iter().all(|&c| c == first) {
        return Err(Error::Degenerate(
            "training set contains a single class".into(),
        ));
    }
    Ok(())
}
