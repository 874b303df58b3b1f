//! Command implementations behind the `cueload` binary: run configuration,
//! input loading, and the `synth`, `quantify`, `analyze`, `classify` and
//! `report` commands. Every command writes its artifacts into the output
//! directory together with a JSON manifest holding the full configuration
//! and SHA-256 digests of inputs and outputs.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{run_classification, usable_samples, ClassifierRun, ClassifyConfig, Sample};
use crate::corpus::{
    build_context_windows, parse_annotations, parse_conllu, parse_gaze, state_counts,
    ContextWindow, GazeStreams, Transcript, UnderstandingAnnotation, UnderstandingState, Utterance,
};
use crate::embeddings::{import_embeddings, Embeddings};
use crate::error::{Error, Result};
use crate::lm::{self, NGramModel};
use crate::pipeline::{
    feature_table_csv, feature_table_jsonl, format_float, grouped_raw, minmax_normalize, Cue,
    FeatureRecord, GazeScorer, ImputePolicy, QuantifiedWindow, Quantifier, TextScope, WordScorer,
};
use crate::stats::{
    box_summary, dunn_posthoc, kruskal_wallis, BoxSummary, DunnResult, KruskalResult,
};
use crate::syntax::{check_lambda, DEFAULT_LAMBDA};
use crate::synth::{generate_corpus, GeneratorConfig};

pub const TRANSCRIPTS_FILE: &str = "transcripts.conllu";
pub const GAZE_FILE: &str = "gaze.csv";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub transcripts: Option<PathBuf>,
    pub gaze: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub logprobs: Option<PathBuf>,
    pub gaze_logprobs: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub lambda: f64,
    pub ngram_order: usize,
    pub gaze_order: usize,
    pub smoothing_k: f64,
    pub text_scope: TextScope,
    pub classify: ClassifyConfig,
    pub synth: GeneratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            transcripts: None,
            gaze: None,
            annotations: None,
            logprobs: None,
            gaze_logprobs: None,
            embeddings: None,
            out: PathBuf::from("."),
            seed: 42,
            lambda: DEFAULT_LAMBDA,
            ngram_order: 2,
            gaze_order: 3,
            smoothing_k: 0.1,
            text_scope: TextScope::Explainer,
            classify: ClassifyConfig::default(),
            synth: GeneratorConfig::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::InvalidParameter(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::InvalidParameter(format!(
            "{key}: expected a boolean, got '{other}'"
        ))),
    }
}

impl RunConfig {
    /// Keys accepted by [`RunConfig::set`]; `_` and `-` are interchangeable.
    pub const KEYS: &'static [&'static str] = &[
        "transcripts",
        "gaze",
        "annotations",
        "logprobs",
        "gaze-logprobs",
        "embeddings",
        "out",
        "seed",
        "lambda",
        "ngram-order",
        "gaze-order",
        "smoothing-k",
        "text-scope",
        "split-ratio",
        "folds",
        "paper-parity",
        "impute",
        "classifiers",
        "max-text-features",
        "include-adl",
        "rf-trees",
        "rf-max-depth",
        "rf-min-leaf",
        "gbt-rounds",
        "gbt-depth",
        "gbt-learning-rate",
        "gbt-l2",
        "fusion-learning-rate",
        "fusion-epochs",
        "fusion-l2",
        "fusion-class-weights",
        "dialogues",
        "utterances",
        "vocab-size",
        "signal",
        "info-signal",
        "gaze-signal",
        "syntax-signal",
        "text-signal",
        "gaze-hz",
        "explainer-share",
    ];

    /// Sets one option from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let k = key.as_str();
        let path = || Some(PathBuf::from(value.trim()));
        match k {
            "transcripts" => self.transcripts = path(),
            "gaze" => self.gaze = path(),
            "annotations" => self.annotations = path(),
            "logprobs" => self.logprobs = path(),
            "gaze-logprobs" => self.gaze_logprobs = path(),
            "embeddings" => self.embeddings = path(),
            "out" => self.out = PathBuf::from(value.trim()),
            "seed" => self.seed = parse_value(k, value)?,
            "lambda" => self.lambda = parse_value(k, value)?,
            "ngram-order" => self.ngram_order = parse_value(k, value)?,
            "gaze-order" => self.gaze_order = parse_value(k, value)?,
            "smoothing-k" => self.smoothing_k = parse_value(k, value)?,
            "text-scope" => self.text_scope = parse_value(k, value)?,
            "split-ratio" => self.classify.split_ratio = parse_value(k, value)?,
            "folds" => self.classify.folds = parse_value(k, value)?,
            "paper-parity" => self.classify.paper_parity = parse_bool(k, value)?,
            "impute" => self.classify.impute = parse_value(k, value)?,
            "classifiers" => {
                let list: Vec<_> = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_value(k, s))
                    .collect::<Result<_>>()?;
                self.classify.classifiers = list;
            }
            "max-text-features" => self.classify.max_text_features = parse_value(k, value)?,
            "include-adl" => self.classify.include_adl = parse_bool(k, value)?,
            "rf-trees" => self.classify.forest.n_trees = parse_value(k, value)?,
            "rf-max-depth" => self.classify.forest.max_depth = parse_value(k, value)?,
            "rf-min-leaf" => self.classify.forest.min_leaf = parse_value(k, value)?,
            "gbt-rounds" => self.classify.boosted.n_rounds = parse_value(k, value)?,
            "gbt-depth" => self.classify.boosted.depth = parse_value(k, value)?,
            "gbt-learning-rate" => self.classify.boosted.learning_rate = parse_value(k, value)?,
            "gbt-l2" => self.classify.boosted.l2 = parse_value(k, value)?,
            "fusion-learning-rate" => self.classify.fusion.learning_rate = parse_value(k, value)?,
            "fusion-epochs" => self.classify.fusion.max_epochs = parse_value(k, value)?,
            "fusion-l2" => self.classify.fusion.l2 = parse_value(k, value)?,
            "fusion-class-weights" => self.classify.fusion.class_weights = parse_bool(k, value)?,
            "dialogues" => self.synth.n_dialogues = parse_value(k, value)?,
            "utterances" => self.synth.utterances_per_dialogue = parse_value(k, value)?,
            "vocab-size" => self.synth.vocab_size = parse_value(k, value)?,
            "signal" => {
                let s: f64 = parse_value(k, value)?;
                self.synth.signal = crate::synth::SignalStrengths::uniform(s);
            }
            "info-signal" => self.synth.signal.info = parse_value(k, value)?,
            "gaze-signal" => self.synth.signal.gaze = parse_value(k, value)?,
            "syntax-signal" => self.synth.signal.syntax = parse_value(k, value)?,
            "text-signal" => self.synth.signal.text = parse_value(k, value)?,
            "gaze-hz" => self.synth.gaze_hz = parse_value(k, value)?,
            "explainer-share" => self.synth.explainer_share = parse_value(k, value)?,
            other => {
                return Err(Error::InvalidParameter(format!("unknown option '{other}'")));
            }
        }
        Ok(())
    }

    /// Applies a key-value file in TOML syntax (flat keys, scalar values;
    /// `classifiers` may be an array). Relative paths are kept verbatim.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidParameter(format!("config file: {e}")))?;
        for (key, value) in &table {
            let s = match value {
                toml::Value::String(s) => s.clone(),
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                toml::Value::Array(items) => items
                    .iter()
                    .map(|v| match v {
                        toml::Value::String(s) => Ok(s.clone()),
                        other => Err(Error::InvalidParameter(format!(
                            "config file: {key}: unsupported list item {other}"
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?
                    .join(","),
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "config file: {key}: unsupported value {other}"
                    )))
                }
            };
            self.set(key, &s)?;
        }
        Ok(())
    }

    /// Propagates the seed and checks parameter ranges.
    pub fn finalize(&mut self) -> Result<()> {
        self.classify.seed = self.seed;
        self.synth.seed = self.seed;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        check_lambda(self.lambda)?;
        for (name, order) in [
            ("ngram-order", self.ngram_order),
            ("gaze-order", self.gaze_order),
        ] {
            if !(1..=lm::MAX_ORDER).contains(&order) {
                return bad(format!(
                    "{name} must lie in 1..={}, got {order}",
                    lm::MAX_ORDER
                ));
            }
        }
        if !(self.smoothing_k > 0.0 && self.smoothing_k.is_finite()) {
            return bad(format!(
                "smoothing-k must be positive, got {}",
                self.smoothing_k
            ));
        }
        let c = &self.classify;
        if !(c.split_ratio > 0.0 && c.split_ratio < 1.0) {
            return bad(format!(
                "split-ratio must lie in (0, 1), got {}",
                c.split_ratio
            ));
        }
        if c.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", c.folds));
        }
        if c.classifiers.is_empty() {
            return bad("no classifiers selected".into());
        }
        if c.max_text_features == 0 {
            return bad("max-text-features must be positive".into());
        }
        if c.forest.n_trees == 0 || c.forest.max_depth == 0 || c.forest.min_leaf == 0 {
            return bad("forest trees, depth and leaf size must be positive".into());
        }
        if c.boosted.n_rounds == 0 || c.boosted.depth == 0 {
            return bad("boosting rounds and depth must be positive".into());
        }
        if !(c.boosted.learning_rate >= 0.0 && c.fusion.learning_rate > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if let ImputePolicy::Constant(v) = c.impute {
            if !v.is_finite() {
                return bad("impute constant must be finite".into());
            }
        }
        self.synth.validate()
    }
}

/// One input file as recorded in a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Adds the file name to a parse error so messages point at the input.
fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{msg} (in {})", path.display()),
        },
        other => other,
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required")))
}

/// Parsed inputs of one run.
#[derive(Debug, Clone)]
pub struct CorpusData {
    pub utterances: Vec<Arc<Utterance>>,
    pub annotations: Vec<UnderstandingAnnotation>,
    pub gaze: Option<GazeStreams>,
    pub windows: Vec<ContextWindow>,
    pub inputs: BTreeMap<String, InputDigest>,
    pub warnings: Vec<String>,
}

/// Reads and parses the configured input files. A missing gaze file (not
/// given, or not found) is a warning: gaze entropy is then missing for every
/// window.
pub fn load_corpus(cfg: &RunConfig) -> Result<CorpusData> {
    let mut inputs = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut load = |role: &str, path: &Path| -> Result<Vec<u8>> {
        let bytes = read_input(path)?;
        inputs.insert(
            role.to_string(),
            InputDigest {
                path: path.display().to_string(),
                sha256: sha256_hex(&bytes),
            },
        );
        Ok(bytes)
    };

    let tpath = required(&cfg.transcripts, "transcripts")?;
    let transcripts = load("transcripts", tpath)?;
    let apath = required(&cfg.annotations, "annotations")?;
    let annotations = load("annotations", apath)?;
    let gaze = match &cfg.gaze {
        None => {
            warnings.push("no gaze file given; gaze entropy is missing for every window".into());
            None
        }
        Some(p) if !p.exists() => {
            warnings.push(format!(
                "gaze file {} not found; gaze entropy is missing for every window",
                p.display()
            ));
            None
        }
        Some(p) => Some((p.as_path(), load("gaze", p)?)),
    };

    // Optional exchange files are hashed here and parsed by the commands.
    for (role, p) in [
        ("logprobs", &cfg.logprobs),
        ("gaze_logprobs", &cfg.gaze_logprobs),
        ("embeddings", &cfg.embeddings),
    ] {
        if let Some(p) = p {
            load(role, p)?;
        }
    }

    let transcript = parse_conllu(transcripts.as_slice()).map_err(|e| in_file(tpath, e))?;
    let annotations = parse_annotations(annotations.as_slice()).map_err(|e| in_file(apath, e))?;
    let gaze = match gaze {
        Some((p, bytes)) => Some(parse_gaze(bytes.as_slice()).map_err(|e| in_file(p, e))?),
        None => None,
    };
    let mut corpus = assemble(transcript, annotations, gaze)?;
    warnings.append(&mut corpus.warnings);
    for w in &warnings {
        warn!("{w}");
    }
    corpus.warnings = warnings;
    corpus.inputs = inputs;
    Ok(corpus)
}

/// Parses in-memory sources; `gaze` may be absent.
pub fn corpus_from_sources(
    transcripts: &[u8],
    gaze: Option<&[u8]>,
    annotations: &[u8],
) -> Result<CorpusData> {
    let transcript = parse_conllu(transcripts)?;
    let annotations = parse_annotations(annotations)?;
    let gaze = gaze.map(parse_gaze).transpose()?;
    assemble(transcript, annotations, gaze)
}

fn assemble(
    transcript: Transcript,
    annotations: Vec<UnderstandingAnnotation>,
    gaze: Option<GazeStreams>,
) -> Result<CorpusData> {
    let mut warnings = Vec::new();
    if transcript.warnings > 0 {
        warnings.push(format!(
            "{} multi-word token or empty node lines skipped",
            transcript.warnings
        ));
    }
    let utterances: Vec<Arc<Utterance>> = transcript.utterances.into_iter().map(Arc::new).collect();
    let empty = GazeStreams::new();
    let windows =
        build_context_windows(&utterances, &annotations, gaze.as_ref().unwrap_or(&empty))?;
    Ok(CorpusData {
        utterances,
        annotations,
        gaze,
        windows,
        inputs: BTreeMap::new(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifySummary {
    pub dialogues: usize,
    pub utterances: usize,
    pub windows: usize,
    pub state_counts: BTreeMap<String, usize>,
    pub missing: BTreeMap<String, usize>,
    pub missing_rate: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl fmt::Display for QuantifySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} windows from {} utterances in {} dialogues",
            self.windows, self.utterances, self.dialogues
        )?;
        let states: Vec<String> = UnderstandingState::ALL
            .iter()
            .map(|s| format!("{}={}", s.code(), self.state_counts[s.code()]))
            .collect();
        writeln!(f, "states: {}", states.join(" "))?;
        for cue in Cue::ALL {
            writeln!(
                f,
                "missing {}: {} ({:.1}%)",
                cue,
                self.missing[cue.name()],
                100.0 * self.missing_rate[cue.name()]
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Quantified corpus: feature records normalized over all windows.
#[derive(Debug, Clone)]
pub struct Quantified {
    pub windows: Vec<QuantifiedWindow>,
    pub records: Vec<FeatureRecord>,
    pub summary: QuantifySummary,
}

pub fn quantify(cfg: &RunConfig, corpus: &CorpusData) -> Result<Quantified> {
    let word_model = lm::train_word_ngram(
        corpus.utterances.iter().map(|u| u.as_ref()),
        cfg.ngram_order,
        cfg.smoothing_k,
    )?;
    let mut imported = BTreeMap::new();
    if let Some(p) = &cfg.logprobs {
        imported = lm::import_logprobs(read_input(p)?.as_slice()).map_err(|e| in_file(p, e))?;
        lm::align_logprobs(&imported, corpus.utterances.iter().map(|u| u.as_ref()))?;
    }
    let gaze_model: Option<NGramModel> = match &corpus.gaze {
        Some(streams) => {
            let seqs: Vec<Vec<u8>> = streams
                .values()
                .map(|s| s.iter().map(|g| g.label).collect())
                .collect();
            match lm::train_gaze_ngram(&seqs, cfg.gaze_order, cfg.smoothing_k) {
                Ok(m) => Some(m),
                Err(Error::Undefined(msg)) => {
                    warn!("{msg}");
                    None
                }
                Err(e) => return Err(e),
            }
        }
        None => None,
    };
    let mut gaze_imported = BTreeMap::new();
    if let Some(p) = &cfg.gaze_logprobs {
        gaze_imported =
            lm::import_gaze_logprobs(read_input(p)?.as_slice()).map_err(|e| in_file(p, e))?;
    }

    let q = Quantifier {
        word: WordScorer {
            model: word_model,
            imported,
        },
        gaze: GazeScorer {
            model: gaze_model,
            imported: gaze_imported,
        },
        lambda: cfg.lambda,
        scope: cfg.text_scope,
    };
    let windows = q.quantify_all(&corpus.windows);
    let mut records: Vec<FeatureRecord> = windows.iter().map(|w| w.record.clone()).collect();
    minmax_normalize(&mut records, None);

    let n = records.len();
    let mut missing = BTreeMap::new();
    let mut missing_rate = BTreeMap::new();
    for cue in Cue::ALL {
        let m = records.iter().filter(|r| r.is_missing(cue)).count();
        missing.insert(cue.name().to_string(), m);
        missing_rate.insert(
            cue.name().to_string(),
            if n == 0 { 0.0 } else { m as f64 / n as f64 },
        );
    }
    let counts = state_counts(&corpus.annotations);
    let mut dialogues: Vec<&str> = corpus
        .utterances
        .iter()
        .map(|u| u.dialogue_id.as_str())
        .collect();
    dialogues.sort_unstable();
    dialogues.dedup();
    let summary = QuantifySummary {
        dialogues: dialogues.len(),
        utterances: corpus.utterances.len(),
        windows: n,
        state_counts: UnderstandingState::ALL
            .iter()
            .map(|s| (s.code().to_string(), counts[s.index()]))
            .collect(),
        missing,
        missing_rate,
        warnings: corpus.warnings.clone(),
    };
    Ok(Quantified {
        windows,
        records,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, InputDigest>,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub result: T,
}

/// Collects output files and writes them together with the manifest.
struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    fn new(dir: &Path) -> Self {
        OutputSet {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    fn write<T: Serialize>(
        self,
        manifest_name: &str,
        command: &str,
        cfg: &RunConfig,
        inputs: &BTreeMap<String, InputDigest>,
        result: T,
    ) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)
            .map_err(|e| Error::io(format!("creating {}", self.dir.display()), e))?;
        let manifest = Manifest {
            tool: "cueload".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: cfg.clone(),
            inputs: inputs.clone(),
            outputs: self
                .files
                .iter()
                .map(|(n, b)| (n.clone(), sha256_hex(b)))
                .collect(),
            result,
        };
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        let mut written = Vec::new();
        for (name, bytes) in self
            .files
            .iter()
            .map(|(n, b)| (n.as_str(), b.as_slice()))
            .chain([(manifest_name, json.as_bytes())])
        {
            let path = self.dir.join(name);
            write_atomic(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Writes via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let ctx = |e: io::Error| Error::io(format!("writing {}", path.display()), e);
    fs::write(&tmp, bytes).map_err(ctx)?;
    fs::rename(&tmp, path).map_err(ctx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthResult {
    pub dialogues: usize,
    pub utterances: usize,
    pub annotations: usize,
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthResult> {
    let corpus = generate_corpus(&cfg.synth)?;
    let result = SynthResult {
        dialogues: cfg.synth.n_dialogues,
        utterances: cfg.synth.n_dialogues * cfg.synth.utterances_per_dialogue,
        annotations: cfg.synth.annotation_count(),
    };
    let mut out = OutputSet::new(&cfg.out);
    out.add(TRANSCRIPTS_FILE, corpus.conllu);
    out.add(GAZE_FILE, corpus.gaze_csv);
    out.add(ANNOTATIONS_FILE, corpus.annotations_csv);
    out.write("synth.json", "synth", cfg, &BTreeMap::new(), result.clone())?;
    info!("synthetic corpus written to {}", cfg.out.display());
    Ok(result)
}

pub fn cmd_quantify(cfg: &RunConfig) -> Result<QuantifySummary> {
    let corpus = load_corpus(cfg)?;
    let q = quantify(cfg, &corpus)?;
    let mut out = OutputSet::new(&cfg.out);
    out.add("features.csv", feature_table_csv(&q.records));
    out.add("features.jsonl", feature_table_jsonl(&q.records)?);
    out.write(
        "quantify.json",
        "quantify",
        cfg,
        &corpus.inputs,
        q.summary.clone(),
    )?;
    Ok(q.summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub state: String,
    pub summary: Option<BoxSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueAnalysis {
    pub cue: String,
    /// Windows with a value for this cue.
    pub n: usize,
    pub kruskal: Option<KruskalResult>,
    pub dunn: Vec<DunnResult>,
    /// Pairs with adjusted p below the significance level.
    pub significant_pairs: Vec<(String, String)>,
    /// Why the tests were not run, if they were not.
    pub skipped: Option<String>,
    pub boxes: Vec<StateBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub significance_level: f64,
    pub cues: Vec<CueAnalysis>,
}

/// Kruskal-Wallis, Dunn and box-plot data per cue on raw values; windows
/// missing a cue are left out of that cue's tests.
pub fn analyze(records: &[FeatureRecord]) -> AnalysisResult {
    let names: Vec<&str> = UnderstandingState::ALL.iter().map(|s| s.code()).collect();
    let cues = Cue::ALL
        .iter()
        .map(|&cue| {
            let groups = grouped_raw(records, cue).to_vec();
            let boxes = UnderstandingState::ALL
                .iter()
                .map(|s| StateBox {
                    state: s.code().to_string(),
                    summary: box_summary(&groups[s.index()]),
                })
                .collect();
            let n = groups.iter().map(Vec::len).sum();
            let tested = kruskal_wallis(cue.name(), &groups)
                .and_then(|kw| Ok((kw, dunn_posthoc(cue.name(), &names, &groups)?)));
            match tested {
                Ok((kw, dunn)) => CueAnalysis {
                    cue: cue.name().to_string(),
                    n,
                    kruskal: Some(kw),
                    significant_pairs: dunn
                        .iter()
                        .filter(|d| d.p_adj < SIGNIFICANCE_LEVEL)
                        .map(|d| d.pair.clone())
                        .collect(),
                    dunn,
                    skipped: None,
                    boxes,
                },
                Err(e) => {
                    warn!("{}: tests skipped: {e}", cue);
                    CueAnalysis {
                        cue: cue.name().to_string(),
                        n,
                        kruskal: None,
                        dunn: Vec::new(),
                        significant_pairs: Vec::new(),
                        skipped: Some(e.to_string()),
                        boxes,
                    }
                }
            }
        })
        .collect();
    AnalysisResult {
        significance_level: SIGNIFICANCE_LEVEL,
        cues,
    }
}

pub fn kruskal_csv(result: &AnalysisResult) -> String {
    let mut out = String::from("cue,H,p,eta2\n");
    for c in &result.cues {
        if let Some(kw) = &c.kruskal {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                c.cue,
                format_float(kw.h),
                format_float(kw.p),
                format_float(kw.eta_squared)
            );
        }
    }
    out
}

pub fn dunn_csv(result: &AnalysisResult) -> String {
    let mut out = String::from("cue,pair,z,p_raw,p_adj\n");
    for c in &result.cues {
        for d in &c.dunn {
            let _ = writeln!(
                out,
                "{},{}-{},{},{},{}",
                c.cue,
                d.pair.0,
                d.pair.1,
                format_float(d.z),
                format_float(d.p_raw),
                format_float(d.p_adj)
            );
        }
    }
    out
}

pub fn boxplot_csv(result: &AnalysisResult) -> String {
    let mut out =
        String::from("cue,state,n,min,whisker_low,q1,median,q3,whisker_high,max,outliers\n");
    for c in &result.cues {
        for b in &c.boxes {
            match &b.summary {
                Some(s) => {
                    let outliers: Vec<String> =
                        s.outliers.iter().map(|v| format_float(*v)).collect();
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{}",
                        c.cue,
                        b.state,
                        s.n,
                        format_float(s.min),
                        format_float(s.whisker_low),
                        format_float(s.q1),
                        format_float(s.median),
                        format_float(s.q3),
                        format_float(s.whisker_high),
                        format_float(s.max),
                        outliers.join(";")
                    );
                }
                None => {
                    let _ = writeln!(out, "{},{},0,,,,,,,,", c.cue, b.state);
                }
            }
        }
    }
    out
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalysisResult> {
    let corpus = load_corpus(cfg)?;
    let q = quantify(cfg, &corpus)?;
    let result = analyze(&q.records);
    let mut out = OutputSet::new(&cfg.out);
    out.add("kruskal.csv", kruskal_csv(&result));
    out.add("dunn.csv", dunn_csv(&result));
    out.add("boxplot.csv", boxplot_csv(&result));
    out.write(
        "analysis.json",
        "analyze",
        cfg,
        &corpus.inputs,
        result.clone(),
    )?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub samples: usize,
    pub embedding_dimension: Option<usize>,
    pub runs: Vec<ClassifierRun>,
}

/// Classification samples; the embedding of a window is that of its
/// annotated utterance.
pub fn build_samples(
    q: &Quantified,
    corpus: &CorpusData,
    embeddings: Option<&Embeddings>,
) -> Vec<Sample> {
    q.windows
        .iter()
        .zip(&q.records)
        .zip(&corpus.windows)
        .map(|((w, rec), cw)| {
            let emb = embeddings.and_then(|e| e.get(&cw.curr.dialogue_id, &cw.curr.id).cloned());
            Sample::new(rec, w.text.clone(), emb)
        })
        .collect()
}

pub fn classify(cfg: &RunConfig, corpus: &CorpusData) -> Result<ClassificationResult> {
    let q = quantify(cfg, corpus)?;
    let embeddings = match &cfg.embeddings {
        Some(p) => Some(import_embeddings(read_input(p)?.as_slice()).map_err(|e| in_file(p, e))?),
        None => None,
    };
    if let Some(e) = &embeddings {
        let missing = corpus
            .windows
            .iter()
            .filter(|w| e.get(&w.curr.dialogue_id, &w.curr.id).is_none())
            .count();
        if missing > 0 {
            warn!("{missing} windows have no embedding; zeros are used");
        }
    }
    let samples = usable_samples(
        build_samples(&q, corpus, embeddings.as_ref()),
        &cfg.classify,
    );
    let runs = run_classification(&samples, &cfg.classify)?;
    Ok(ClassificationResult {
        samples: samples.len(),
        embedding_dimension: embeddings.map(|e| e.dimension),
        runs,
    })
}

/// Hold-out scores plus cross-validation mean ± SD.
pub fn scores_csv(result: &ClassificationResult) -> String {
    let mut out = String::from("classifier,features,accuracy,macro_f1,cv_accuracy,cv_macro_f1\n");
    for r in &result.runs {
        let _ = writeln!(
            out,
            "{},{},{:.3},{:.3},{:.3} ± {:.3},{:.3} ± {:.3}",
            r.classifier,
            r.features,
            r.holdout.accuracy,
            r.holdout.macro_f1,
            r.cv.accuracy_mean,
            r.cv.accuracy_sd,
            r.cv.macro_f1_mean,
            r.cv.macro_f1_sd
        );
    }
    out
}

/// Hold-out confusion matrices, gold classes as rows.
pub fn confusion_csv(result: &ClassificationResult) -> String {
    let mut out = String::from("classifier,features,gold");
    for s in UnderstandingState::ALL {
        let _ = write!(out, ",{}", s.code());
    }
    out.push('\n');
    for r in &result.runs {
        for (g, row) in r.holdout.confusion.iter().enumerate() {
            let gold = UnderstandingState::from_index(g).map_or("?", |s| s.code());
            let _ = write!(out, "{},{},{}", r.classifier, r.features, gold);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn cmd_classify(cfg: &RunConfig) -> Result<ClassificationResult> {
    let corpus = load_corpus(cfg)?;
    let result = classify(cfg, &corpus)?;
    let mut out = OutputSet::new(&cfg.out);
    out.add("scores.csv", scores_csv(&result));
    out.add("confusion.csv", confusion_csv(&result));
    out.write(
        "classification.json",
        "classify",
        cfg,
        &corpus.inputs,
        result.clone(),
    )?;
    Ok(result)
}

pub const REPORT_PARTS: [(&str, &str); 3] = [
    ("quantify", "quantify.json"),
    ("analysis", "analysis.json"),
    ("classification", "classification.json"),
];

/// Merges the manifests found in the output directory into `report.json`.
/// Returns the names of the merged parts.
pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<String>> {
    let mut parts = BTreeMap::new();
    let mut inputs = BTreeMap::new();
    for (name, file) in REPORT_PARTS {
        let path = cfg.out.join(file);
        match fs::read(&path) {
            Ok(bytes) => {
                inputs.insert(
                    name.to_string(),
                    InputDigest {
                        path: file.to_string(),
                        sha256: sha256_hex(&bytes),
                    },
                );
                let value: serde_json::Value = serde_json::from_slice(&bytes)?;
                parts.insert(name.to_string(), value);
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
        }
    }
    if parts.is_empty() {
        return Err(Error::Validation(format!(
            "no command outputs found in {}",
            cfg.out.display()
        )));
    }
    let names = parts.keys().cloned().collect();
    OutputSet::new(&cfg.out).write("report.json", "report", cfg, &inputs, parts)?;
    Ok(names)
}
