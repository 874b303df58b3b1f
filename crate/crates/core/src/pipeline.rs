//! Per-window cue quantification, min-max normalization, missing-value
//! handling and feature-table export.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::{ContextWindow, Speaker, UnderstandingState, Utterance};
use crate::error::{Error, Result};
use crate::lm::{self, GazeLogProbRecord, NGramModel, TokenLogProbRecord, UtteranceKey};
use crate::syntax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cue {
    InfoValue,
    GazeEntropy,
    Sc,
    Adl,
}

impl Cue {
    pub const ALL: [Cue; 4] = [Cue::InfoValue, Cue::GazeEntropy, Cue::Sc, Cue::Adl];

    pub fn name(self) -> &'static str {
        match self {
            Cue::InfoValue => "info_value",
            Cue::GazeEntropy => "gaze_entropy",
            Cue::Sc => "sc",
            Cue::Adl => "adl",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Cue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which speakers' utterances feed the text-derived cues and text features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TextScope {
    #[default]
    Explainer,
    Both,
}

impl TextScope {
    pub fn includes(self, speaker: Speaker) -> bool {
        match self {
            TextScope::Explainer => speaker == Speaker::Explainer,
            TextScope::Both => true,
        }
    }
}

impl FromStr for TextScope {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "explainer" => Ok(TextScope::Explainer),
            "both" => Ok(TextScope::Both),
            other => Err(format!("unknown text scope '{other}' (explainer|both)")),
        }
    }
}

impl fmt::Display for TextScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextScope::Explainer => "explainer",
            TextScope::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub window_id: String,
    pub dialogue_id: String,
    pub label: UnderstandingState,
    /// Raw cue values in [`Cue::ALL`] order; `None` when undefined.
    pub raw: [Option<f64>; 4],
    /// Min-max normalized values; `None` until normalized, or when missing.
    pub normalized: [Option<f64>; 4],
}

impl FeatureRecord {
    pub fn raw(&self, cue: Cue) -> Option<f64> {
        self.raw[cue.index()]
    }

    pub fn normalized(&self, cue: Cue) -> Option<f64> {
        self.normalized[cue.index()]
    }

    pub fn is_missing(&self, cue: Cue) -> bool {
        self.raw[cue.index()].is_none()
    }

    /// Four characters, `1` where the cue is missing, in [`Cue::ALL`] order.
    pub fn missing_mask(&self) -> String {
        self.raw
            .iter()
            .map(|v| if v.is_none() { '1' } else { '0' })
            .collect()
    }
}

/// Word surprisal source: the built-in model, optionally overridden per
/// utterance by imported log-probabilities.
#[derive(Debug, Clone)]
pub struct WordScorer {
    pub model: NGramModel,
    pub imported: BTreeMap<UtteranceKey, TokenLogProbRecord>,
}

impl WordScorer {
    fn surprisals(&self, u: &Utterance) -> Vec<f64> {
        let key = (u.dialogue_id.clone(), u.id.clone());
        match self.imported.get(&key) {
            Some(rec) => rec.logprobs.iter().map(|lp| -lp).collect(),
            None => self.model.surprisals(&u.normalized_tokens()),
        }
    }
}

/// Gaze surprisal source. Imported per-utterance records are used only when
/// every utterance of the window has one; otherwise the model scores the
/// window's aligned labels.
#[derive(Debug, Clone)]
pub struct GazeScorer {
    pub model: Option<NGramModel>,
    pub imported: BTreeMap<UtteranceKey, GazeLogProbRecord>,
}

pub struct Quantifier {
    pub word: WordScorer,
    pub gaze: GazeScorer,
    pub lambda: f64,
    pub scope: TextScope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantifiedWindow {
    pub record: FeatureRecord,
    /// Normalized tokens of the in-scope utterances, for text features.
    pub text: Vec<String>,
    /// Keys of all window utterances, in dialogue order.
    pub utterances: Vec<UtteranceKey>,
}

impl Quantifier {
    pub fn quantify(&self, window: &ContextWindow) -> QuantifiedWindow {
        let scoped: Vec<&Utterance> = window
            .utterances()
            .filter(|u| self.scope.includes(u.speaker))
            .collect();

        let surprisals: Vec<f64> = scoped
            .iter()
            .flat_map(|u| self.word.surprisals(u))
            .collect();
        let info = lm::mean_surprisal(&surprisals).ok();

        let (sc, adl) = match syntax::window_syntax_metrics(scoped.iter().copied(), self.lambda) {
            Ok(m) => (Some(m.sc), m.adl.ok()),
            Err(e) => {
                warn!("window {}: {e}", window.id);
                (None, None)
            }
        };

        let gaze = self.gaze_entropy(window);
        let text = scoped.iter().flat_map(|u| u.normalized_tokens()).collect();
        QuantifiedWindow {
            record: FeatureRecord {
                window_id: window.id.clone(),
                dialogue_id: window.annotation.dialogue_id.clone(),
                label: window.annotation.state,
                raw: [info, gaze, sc, adl],
                normalized: [None; 4],
            },
            text,
            utterances: window
                .utterances()
                .map(|u| (u.dialogue_id.clone(), u.id.clone()))
                .collect(),
        }
    }

    fn gaze_entropy(&self, window: &ContextWindow) -> Option<f64> {
        let imported: Option<Vec<&GazeLogProbRecord>> = if self.gaze.imported.is_empty() {
            None
        } else {
            window
                .utterances()
                .map(|u| {
                    self.gaze
                        .imported
                        .get(&(u.dialogue_id.clone(), u.id.clone()))
                })
                .collect()
        };
        if let Some(records) = imported {
            let s: Vec<f64> = records
                .iter()
                .flat_map(|r| r.logprobs.iter().map(|lp| -lp))
                .collect();
            return lm::mean_surprisal(&s).ok();
        }
        let model = self.gaze.model.as_ref()?;
        lm::gaze_entropy(&window.gaze_labels(), model).ok()
    }

    pub fn quantify_all(&self, windows: &[ContextWindow]) -> Vec<QuantifiedWindow> {
        windows.iter().map(|w| self.quantify(w)).collect()
    }
}

/// Per-cue min-max scaler. Cues with no observed values stay unfitted and
/// transform to `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: [Option<f64>; 4],
    pub max: [Option<f64>; 4],
}

impl MinMaxScaler {
    pub fn fit<'a, I>(records: I) -> Self
    where
        I: IntoIterator<Item = &'a FeatureRecord>,
    {
        let mut min = [None::<f64>; 4];
        let mut max = [None::<f64>; 4];
        for r in records {
            for (i, v) in r.raw.iter().enumerate() {
                if let Some(v) = *v {
                    min[i] = Some(min[i].map_or(v, |m| m.min(v)));
                    max[i] = Some(max[i].map_or(v, |m| m.max(v)));
                }
            }
        }
        for cue in Cue::ALL {
            if min[cue.index()].is_none() {
                debug!("no observed values for {cue}; normalization skipped");
            }
        }
        MinMaxScaler { min, max }
    }

    /// `(x - min) / (max - min)` clamped to [0, 1]; a constant cue maps to 0.
    pub fn scale(&self, cue: Cue, x: f64) -> Option<f64> {
        let (lo, hi) = (self.min[cue.index()]?, self.max[cue.index()]?);
        if hi == lo {
            return Some(0.0);
        }
        Some(((x - lo) / (hi - lo)).clamp(0.0, 1.0))
    }

    pub fn transform(&self, record: &mut FeatureRecord) {
        for cue in Cue::ALL {
            record.normalized[cue.index()] = record.raw(cue).and_then(|x| self.scale(cue, x));
        }
    }
}

/// Fits on the records selected by `fit_on` (all when `None`) and fills
/// every record's normalized values.
pub fn minmax_normalize(records: &mut [FeatureRecord], fit_on: Option<&[usize]>) -> MinMaxScaler {
    let scaler = match fit_on {
        Some(idx) => MinMaxScaler::fit(idx.iter().map(|&i| &records[i])),
        None => MinMaxScaler::fit(records.iter()),
    };
    for r in records.iter_mut() {
        scaler.transform(r);
    }
    scaler
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "policy", content = "value")]
pub enum ImputePolicy {
    /// Leave missing values out; consumers skip them per cue.
    Drop,
    Mean,
    Constant(f64),
}

impl FromStr for ImputePolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "drop" => Ok(ImputePolicy::Drop),
            "mean" => Ok(ImputePolicy::Mean),
            other => {
                let inner = other
                    .strip_prefix("constant(")
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| other.strip_prefix("constant:"));
                inner
                    .and_then(|v| v.parse().ok())
                    .map(ImputePolicy::Constant)
                    .ok_or_else(|| {
                        format!("unknown impute policy '{other}' (drop|mean|constant(c))")
                    })
            }
        }
    }
}

impl fmt::Display for ImputePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImputePolicy::Drop => f.write_str("drop"),
            ImputePolicy::Mean => f.write_str("mean"),
            ImputePolicy::Constant(c) => write!(f, "constant({c})"),
        }
    }
}

/// Fills missing normalized values. `Drop` leaves them in place.
pub fn impute_missing(records: &[FeatureRecord], policy: ImputePolicy) -> Vec<FeatureRecord> {
    let mut out = records.to_vec();
    for cue in Cue::ALL {
        let i = cue.index();
        let fill = match policy {
            ImputePolicy::Drop => continue,
            ImputePolicy::Constant(c) => c,
            ImputePolicy::Mean => {
                let present: Vec<f64> = records.iter().filter_map(|r| r.normalized[i]).collect();
                if present.is_empty() {
                    continue;
                }
                present.iter().sum::<f64>() / present.len() as f64
            }
        };
        for r in &mut out {
            if r.normalized[i].is_none() {
                r.normalized[i] = Some(fill);
            }
        }
    }
    out
}

/// Raw values of one cue grouped by state (class-index order), dropping
/// missing values.
pub fn grouped_raw(records: &[FeatureRecord], cue: Cue) -> [Vec<f64>; 4] {
    let mut groups: [Vec<f64>; 4] = Default::default();
    for r in records {
        if let Some(v) = r.raw(cue) {
            groups[r.label.index()].push(v);
        }
    }
    groups
}

pub const FEATURE_CSV_HEADER: &str = "window_id,dialogue_id,label,info_value,gaze_entropy,sc,adl,info_value_n,gaze_entropy_n,sc_n,adl_n,missing_mask";

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes. Non-finite values print as `NaN`/`inf`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
    } else {
        x.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn feature_table_csv(records: &[FeatureRecord]) -> String {
    let mut out = String::from(FEATURE_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{}",
            csv_field(&r.window_id),
            csv_field(&r.dialogue_id),
            r.label
        );
        for v in r.raw.iter().chain(r.normalized.iter()) {
            let _ = write!(out, ",{}", opt(*v));
        }
        let _ = writeln!(out, ",{}", r.missing_mask());
    }
    out
}

#[derive(Serialize)]
struct FeatureJson<'a> {
    window_id: &'a str,
    dialogue_id: &'a str,
    label: &'a str,
    info_value: Option<f64>,
    gaze_entropy: Option<f64>,
    sc: Option<f64>,
    adl: Option<f64>,
    info_value_n: Option<f64>,
    gaze_entropy_n: Option<f64>,
    sc_n: Option<f64>,
    adl_n: Option<f64>,
    missing_mask: String,
}

pub fn feature_table_jsonl(records: &[FeatureRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        let j = FeatureJson {
            window_id: &r.window_id,
            dialogue_id: &r.dialogue_id,
            label: r.label.code(),
            info_value: r.raw[0],
            gaze_entropy: r.raw[1],
            sc: r.raw[2],
            adl: r.raw[3],
            info_value_n: r.normalized[0],
            gaze_entropy_n: r.normalized[1],
            sc_n: r.normalized[2],
            adl_n: r.normalized[3],
            missing_mask: r.missing_mask(),
        };
        out.push_str(&serde_json::to_string(&j).map_err(Error::from)?);
        out.push('\n');
    }
    Ok(out)
}
