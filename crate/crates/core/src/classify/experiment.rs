//! The evaluation protocol: every selected classifier under text-only and
//! text+cue features, scored on a stratified hold-out split and by
//! stratified k-fold cross-validation. Text vectorizer, cue scaler and
//! imputation are fitted on the training part of each split.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::boost::{train_boosted, BoostConfig};
use super::forest::{train_forest, ForestConfig};
use super::fusion::{train_fusion, FusionConfig};
use super::metrics::{evaluate_n, CvSummary, EvaluationReport};
use super::split::{kfold_cv, stratified_split};
use super::tfidf::TfidfVectorizer;
use super::{Classifier, Matrix};
use crate::corpus::UnderstandingState;
use crate::error::{Error, Result};
use crate::pipeline::{Cue, FeatureRecord, ImputePolicy, MinMaxScaler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "rf")]
    Forest,
    #[serde(rename = "gbt")]
    Boosted,
    #[serde(rename = "fusion")]
    Fusion,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [
        ClassifierKind::Forest,
        ClassifierKind::Boosted,
        ClassifierKind::Fusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Forest => "rf",
            ClassifierKind::Boosted => "gbt",
            ClassifierKind::Fusion => "fusion",
        }
    }
}

impl FromStr for ClassifierKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "rf" | "forest" => Ok(ClassifierKind::Forest),
            "gbt" | "boosted" | "xgb" => Ok(ClassifierKind::Boosted),
            "fusion" => Ok(ClassifierKind::Fusion),
            other => Err(format!("unknown classifier '{other}' (rf|gbt|fusion)")),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "text")]
    TextOnly,
    #[serde(rename = "text+cues")]
    TextAndCues,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 2] = [FeatureSet::TextOnly, FeatureSet::TextAndCues];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::TextOnly => "text",
            FeatureSet::TextAndCues => "text+cues",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub seed: u64,
    pub split_ratio: f64,
    pub folds: usize,
    pub classifiers: Vec<ClassifierKind>,
    /// Vocabulary cap for the text features.
    pub max_text_features: usize,
    /// Add average dependency length to the cue block (ablation).
    pub include_adl: bool,
    /// Use cue values normalized over the full data set instead of refitting
    /// the scaler on each training split.
    pub paper_parity: bool,
    pub impute: ImputePolicy,
    pub forest: ForestConfig,
    pub boosted: BoostConfig,
    pub fusion: FusionConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            seed: 42,
            split_ratio: 0.7,
            folds: 10,
            classifiers: ClassifierKind::ALL.to_vec(),
            max_text_features: 100,
            include_adl: false,
            paper_parity: false,
            impute: ImputePolicy::Mean,
            forest: ForestConfig::default(),
            boosted: BoostConfig::default(),
            fusion: FusionConfig::default(),
        }
    }
}

/// One classification instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: UnderstandingState,
    pub raw: [Option<f64>; 4],
    /// Values normalized over the whole data set (used with `--paper-parity`).
    pub normalized: [Option<f64>; 4],
    pub text: Vec<String>,
    pub embedding: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(record: &FeatureRecord, text: Vec<String>, embedding: Option<Vec<f64>>) -> Self {
        Sample {
            label: record.label,
            raw: record.raw,
            normalized: record.normalized,
            text,
            embedding,
        }
    }

    fn as_record(&self) -> FeatureRecord {
        FeatureRecord {
            window_id: String::new(),
            dialogue_id: String::new(),
            label: self.label,
            raw: self.raw,
            normalized: [None; 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRun {
    pub classifier: ClassifierKind,
    pub features: FeatureSet,
    pub holdout: EvaluationReport,
    pub cv: CvSummary,
}

impl ClassifyConfig {
    pub fn cues(&self) -> Vec<Cue> {
        let mut c = vec![Cue::InfoValue, Cue::GazeEntropy, Cue::Sc];
        if self.include_adl {
            c.push(Cue::Adl);
        }
        c
    }
}

struct Features {
    train: Matrix,
    eval: Matrix,
}

fn build_features(
    samples: &[Sample],
    train: &[usize],
    eval: &[usize],
    kind: ClassifierKind,
    set: FeatureSet,
    config: &ClassifyConfig,
) -> Result<Features> {
    let docs: Vec<&Vec<String>> = train.iter().map(|&i| &samples[i].text).collect();
    let docs: Vec<Vec<&str>> = docs
        .iter()
        .map(|d| d.iter().map(String::as_str).collect())
        .collect();
    let vectorizer = TfidfVectorizer::fit(&docs, config.max_text_features)?;

    let cues = config.cues();
    let train_records: Vec<FeatureRecord> = train.iter().map(|&i| samples[i].as_record()).collect();
    let scaler = MinMaxScaler::fit(train_records.iter());
    let cue_value = |s: &Sample, cue: Cue| -> Option<f64> {
        if config.paper_parity {
            s.normalized[cue as usize]
        } else {
            s.raw[cue as usize].and_then(|x| scaler.scale(cue, x))
        }
    };
    let fills: Vec<f64> = cues
        .iter()
        .map(|&cue| match config.impute {
            ImputePolicy::Constant(c) => c,
            ImputePolicy::Mean | ImputePolicy::Drop => {
                let present: Vec<f64> = train
                    .iter()
                    .filter_map(|&i| cue_value(&samples[i], cue))
                    .collect();
                if present.is_empty() {
                    0.0
                } else {
                    present.iter().sum::<f64>() / present.len() as f64
                }
            }
        })
        .collect();

    let embedding_dim = samples
        .iter()
        .filter_map(|s| s.embedding.as_ref().map(Vec::len))
        .max()
        .unwrap_or(0);

    let row = |i: usize| -> Vec<f64> {
        let s = &samples[i];
        let mut r = vectorizer.transform(&s.text);
        if set == FeatureSet::TextAndCues {
            for (j, &cue) in cues.iter().enumerate() {
                r.push(cue_value(s, cue).unwrap_or(fills[j]));
            }
        }
        if kind == ClassifierKind::Fusion && embedding_dim > 0 {
            match &s.embedding {
                Some(e) => r.extend_from_slice(e),
                None => r.extend(std::iter::repeat_n(0.0, embedding_dim)),
            }
        }
        r
    };
    Ok(Features {
        train: train.iter().map(|&i| row(i)).collect(),
        eval: eval.iter().map(|&i| row(i)).collect(),
    })
}

/// Trains `kind` on `train` and predicts `eval`.
pub fn fit_predict(
    samples: &[Sample],
    train: &[usize],
    eval: &[usize],
    kind: ClassifierKind,
    set: FeatureSet,
    config: &ClassifyConfig,
) -> Result<Vec<usize>> {
    let f = build_features(samples, train, eval, kind, set, config)?;
    let y: Vec<usize> = train.iter().map(|&i| samples[i].label.index()).collect();
    let k = Some(UnderstandingState::COUNT);
    let pred = match kind {
        ClassifierKind::Forest => {
            let cfg = ForestConfig {
                seed: config.seed,
                n_classes: k,
                ..config.forest
            };
            train_forest(&f.train, &y, &cfg)?.predict_all(&f.eval)
        }
        ClassifierKind::Boosted => {
            let cfg = BoostConfig {
                seed: config.seed,
                n_classes: k,
                ..config.boosted
            };
            train_boosted(&f.train, &y, &cfg)?.predict_all(&f.eval)
        }
        ClassifierKind::Fusion => {
            let cfg = FusionConfig {
                n_classes: k,
                ..config.fusion
            };
            train_fusion(&f.train, &y, &cfg)?.predict_all(&f.eval)
        }
    };
    Ok(pred)
}

/// Drops samples lacking a used cue when the impute policy is `Drop`.
pub fn usable_samples(samples: Vec<Sample>, config: &ClassifyConfig) -> Vec<Sample> {
    if config.impute != ImputePolicy::Drop {
        return samples;
    }
    let cues = config.cues();
    samples
        .into_iter()
        .filter(|s| cues.iter().all(|&c| s.raw[c as usize].is_some()))
        .collect()
}

pub fn run_one(
    samples: &[Sample],
    kind: ClassifierKind,
    set: FeatureSet,
    config: &ClassifyConfig,
) -> Result<ClassifierRun> {
    let labels: Vec<usize> = samples.iter().map(|s| s.label.index()).collect();
    let (train, test) = stratified_split(&labels, config.split_ratio, config.seed)?;
    let pred = fit_predict(samples, &train, &test, kind, set, config)?;
    let gold: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let holdout = evaluate_n(&pred, &gold, UnderstandingState::COUNT)?;
    let cv = kfold_cv(
        &labels,
        config.folds,
        config.seed,
        UnderstandingState::COUNT,
        |tr, va| fit_predict(samples, tr, va, kind, set, config),
    )?;
    Ok(ClassifierRun {
        classifier: kind,
        features: set,
        holdout,
        cv,
    })
}

/// All selected classifiers under both feature settings, classifier-major.
pub fn run_classification(
    samples: &[Sample],
    config: &ClassifyConfig,
) -> Result<Vec<ClassifierRun>> {
    if samples.is_empty() {
        return Err(Error::Degenerate("no samples to classify".into()));
    }
    let dims: Vec<usize> = samples
        .iter()
        .filter_map(|s| s.embedding.as_ref().map(Vec::len))
        .collect();
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::InvalidParameter(
            "embeddings differ in dimension".into(),
        ));
    }
    let mut runs = Vec::new();
    for &kind in &config.classifiers {
        for set in FeatureSet::ALL {
            runs.push(run_one(samples, kind, set, config)?);
        }
    }
    Ok(runs)
}
