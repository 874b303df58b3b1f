//! Additive-smoothing n-gram models over words and gaze labels, surprisal
//! scoring, and the JSON-lines log-probability exchange format.
//!
//! Probabilities are in nats. A model predicts the observed symbols plus
//! end-of-sequence and an unknown symbol; the begin-of-sequence marker only
//! ever appears in contexts. With `V` predictable events and smoothing
//! constant `k`:
//!
//! ```text
//! P(s | ctx) = (count(ctx, s) + k) / (count(ctx) + k * V)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::corpus::{Utterance, GAZE_LABEL_MAX, GAZE_LABEL_MIN};
use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;
const FIRST_SYMBOL_ID: u32 = 3;

pub const MAX_ORDER: usize = 5;
pub const MODEL_FORMAT: &str = "cueload-ngram";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Word,
    Gaze,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    by_symbol: HashMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    kind: ModelKind,
    order: usize,
    k: f64,
    symbols: Vec<String>,
    ids: HashMap<String, u32>,
    counts: HashMap<Vec<u32>, ContextCounts>,
}

impl NGramModel {
    fn empty(kind: ModelKind, order: usize, k: f64) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::InvalidParameter(format!(
                "n-gram order {order} outside [1, {MAX_ORDER}]"
            )));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "smoothing constant k must be positive and finite, got {k}"
            )));
        }
        let mut m = NGramModel {
            kind,
            order,
            k,
            symbols: Vec::new(),
            ids: HashMap::new(),
            counts: HashMap::new(),
        };
        for s in [BOS, EOS, UNK] {
            m.intern(s);
        }
        Ok(m)
    }

    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }

    fn lookup(&self, s: &str) -> u32 {
        match self.ids.get(s) {
            Some(&id) if id != BOS_ID => id,
            _ => UNK_ID,
        }
    }

    fn add_sequence(&mut self, seq: &[u32]) {
        let ctx_len = self.order - 1;
        let mut history = vec![BOS_ID; ctx_len];
        for &sym in seq.iter().chain(std::iter::once(&EOS_ID)) {
            let entry = self.counts.entry(history.clone()).or_default();
            entry.total += 1;
            *entry.by_symbol.entry(sym).or_insert(0) += 1;
            if ctx_len > 0 {
                history.remove(0);
                history.push(sym);
            }
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    /// Number of predictable events: vocabulary plus EOS and UNK.
    pub fn event_count(&self) -> usize {
        self.symbols.len() - 1
    }

    /// Predictable event symbols in id order.
    pub fn events(&self) -> impl Iterator<Item = &str> {
        self.symbols[1..].iter().map(String::as_str)
    }

    fn context_ids(&self, context: &[&str]) -> Vec<u32> {
        let ctx_len = self.order - 1;
        let mut ids = vec![BOS_ID; ctx_len];
        let tail: Vec<u32> = context
            .iter()
            .rev()
            .take(ctx_len)
            .rev()
            .map(|s| if *s == BOS { BOS_ID } else { self.lookup(s) })
            .collect();
        let skip = ctx_len - tail.len();
        ids[skip..].copy_from_slice(&tail);
        ids
    }

    fn prob_ids(&self, ctx: &[u32], sym: u32) -> f64 {
        let v = self.event_count() as f64;
        let (count, total) = match self.counts.get(ctx) {
            Some(c) => (c.by_symbol.get(&sym).copied().unwrap_or(0), c.total),
            None => (0, 0),
        };
        (count as f64 + self.k) / (total as f64 + self.k * v)
    }

    /// `P(symbol | context)`; the context is the full history, of which only
    /// the last `order - 1` symbols matter. Shorter histories are BOS-padded.
    pub fn prob(&self, context: &[&str], symbol: &str) -> f64 {
        let ctx = self.context_ids(context);
        self.prob_ids(&ctx, self.lookup(symbol))
    }

    /// Full conditional distribution over [`Self::events`] for a context.
    pub fn distribution(&self, context: &[&str]) -> Vec<f64> {
        let ctx = self.context_ids(context);
        (1..self.symbols.len() as u32)
            .map(|s| self.prob_ids(&ctx, s))
            .collect()
    }

    /// Per-symbol surprisal `-ln P(s_i | s_<i)` for every symbol of the
    /// sequence. The closing EOS is not included.
    pub fn surprisals<S: AsRef<str>>(&self, seq: &[S]) -> Vec<f64> {
        let ctx_len = self.order - 1;
        let mut history = vec![BOS_ID; ctx_len];
        let mut out = Vec::with_capacity(seq.len());
        for s in seq {
            let sym = self.lookup(s.as_ref());
            out.push(-self.prob_ids(&history, sym).ln());
            if ctx_len > 0 {
                history.remove(0);
                history.push(sym);
            }
        }
        out
    }

    /// Contexts seen in training, as symbol strings (BOS included).
    pub fn observed_contexts(&self) -> Vec<Vec<String>> {
        let mut ctxs: Vec<Vec<String>> = self
            .counts
            .keys()
            .map(|c| {
                c.iter()
                    .map(|&i| self.symbols[i as usize].clone())
                    .collect()
            })
            .collect();
        ctxs.sort();
        ctxs
    }

    pub fn to_json(&self) -> Result<String> {
        let mut contexts: Vec<PersistedContext> = self
            .counts
            .iter()
            .map(|(ctx, c)| {
                let counts: BTreeMap<String, u64> = c
                    .by_symbol
                    .iter()
                    .map(|(&s, &n)| (self.symbols[s as usize].clone(), n))
                    .collect();
                PersistedContext {
                    context: ctx
                        .iter()
                        .map(|&i| self.symbols[i as usize].clone())
                        .collect(),
                    counts,
                }
            })
            .collect();
        contexts.sort_by(|a, b| a.context.cmp(&b.context));
        let persisted = PersistedModel {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            kind: self.kind,
            order: self.order,
            k: self.k,
            symbols: self.symbols[FIRST_SYMBOL_ID as usize..].to_vec(),
            contexts,
        };
        Ok(serde_json::to_string_pretty(&persisted)?)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let p: PersistedModel = serde_json::from_str(src)?;
        if p.format != MODEL_FORMAT || p.version != MODEL_VERSION {
            return Err(Error::Validation(format!(
                "unsupported model format {} v{}",
                p.format, p.version
            )));
        }
        let mut m = NGramModel::empty(p.kind, p.order, p.k)?;
        for s in &p.symbols {
            m.intern(s);
        }
        for pc in p.contexts {
            if pc.context.len() != m.order - 1 {
                return Err(Error::Validation(
                    "context length does not match order".into(),
                ));
            }
            let key: Vec<u32> = pc
                .context
                .iter()
                .map(|s| {
                    m.ids
                        .get(s)
                        .copied()
                        .ok_or_else(|| Error::Validation(format!("unknown symbol '{s}'")))
                })
                .collect::<Result<_>>()?;
            let mut cc = ContextCounts::default();
            for (s, n) in pc.counts {
                let id = *m
                    .ids
                    .get(&s)
                    .ok_or_else(|| Error::Validation(format!("unknown symbol '{s}'")))?;
                cc.total += n;
                cc.by_symbol.insert(id, n);
            }
            m.counts.insert(key, cc);
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct PersistedContext {
    context: Vec<String>,
    counts: BTreeMap<String, u64>,
}

/// Self-describing model dump: `format` and `version` come first.
#[derive(Serialize, Deserialize)]
struct PersistedModel {
    format: String,
    version: u32,
    kind: ModelKind,
    order: usize,
    k: f64,
    symbols: Vec<String>,
    contexts: Vec<PersistedContext>,
}

/// Trains a word model on the normalized tokens of each utterance.
pub fn train_word_ngram<'a, I>(utterances: I, order: usize, k: f64) -> Result<NGramModel>
where
    I: IntoIterator<Item = &'a Utterance>,
{
    let seqs: Vec<Vec<String>> = utterances
        .into_iter()
        .map(Utterance::normalized_tokens)
        .collect();
    train_word_sequences(&seqs, order, k)
}

pub fn train_word_sequences<S: AsRef<str>>(
    sequences: &[Vec<S>],
    order: usize,
    k: f64,
) -> Result<NGramModel> {
    let mut m = NGramModel::empty(ModelKind::Word, order, k)?;
    if sequences.is_empty() {
        return Err(Error::Undefined(
            "cannot train a word model on an empty corpus".into(),
        ));
    }
    for seq in sequences {
        let ids: Vec<u32> = seq.iter().map(|s| m.intern(s.as_ref())).collect();
        m.add_sequence(&ids);
    }
    Ok(m)
}

/// Trains a gaze model; the vocabulary is always labels 1..=81.
pub fn train_gaze_ngram(sequences: &[Vec<u8>], order: usize, k: f64) -> Result<NGramModel> {
    let mut m = NGramModel::empty(ModelKind::Gaze, order, k)?;
    for label in GAZE_LABEL_MIN..=GAZE_LABEL_MAX {
        m.intern(&label.to_string());
    }
    if sequences.iter().all(Vec::is_empty) {
        return Err(Error::Undefined(
            "cannot train a gaze model without labels".into(),
        ));
    }
    for seq in sequences {
        let mut ids = Vec::with_capacity(seq.len());
        for &label in seq {
            if !(GAZE_LABEL_MIN..=GAZE_LABEL_MAX).contains(&label) {
                return Err(Error::Validation(format!(
                    "gaze label {label} out of range"
                )));
            }
            ids.push(m.lookup(&label.to_string()));
        }
        m.add_sequence(&ids);
    }
    Ok(m)
}

fn mean_nonneg(values: &[f64], what: &str) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Undefined(format!("{what} of an empty sequence")));
    }
    let sum: f64 = values.iter().sum();
    Ok(sum / values.len() as f64)
}

/// Mean surprisal of the tokens under `model` (nats per token).
pub fn information_value<S: AsRef<str>>(tokens: &[S], model: &NGramModel) -> Result<f64> {
    mean_nonneg(&model.surprisals(tokens), "information value")
}

/// Mean of pre-computed surprisals, e.g. negated imported log-probabilities.
pub fn mean_surprisal(surprisals: &[f64]) -> Result<f64> {
    mean_nonneg(surprisals, "mean surprisal")
}

/// Mean negative log-likelihood per gaze label.
pub fn gaze_entropy(labels: &[u8], model: &NGramModel) -> Result<f64> {
    let syms: Vec<String> = labels.iter().map(u8::to_string).collect();
    mean_nonneg(&model.surprisals(&syms), "gaze entropy")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbRecord {
    pub dialogue_id: String,
    pub utterance_id: String,
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeLogProbRecord {
    pub dialogue_id: String,
    pub utterance_id: String,
    pub labels: Vec<u8>,
    pub logprobs: Vec<f64>,
}

pub type UtteranceKey = (String, String);

fn check_logprobs(key: &UtteranceKey, n_items: usize, logprobs: &[f64]) -> Result<()> {
    let alignment = |msg: String| Error::Alignment {
        dialogue_id: key.0.clone(),
        utterance_id: key.1.clone(),
        msg,
    };
    if n_items != logprobs.len() {
        return Err(alignment(format!(
            "length mismatch: {n_items} items but {} logprobs",
            logprobs.len()
        )));
    }
    if let Some(bad) = logprobs.iter().find(|lp| !lp.is_finite() || **lp > 0.0) {
        return Err(alignment(format!("logprob {bad} must be finite and <= 0")));
    }
    Ok(())
}

fn read_jsonl<T, R>(source: R) -> Result<Vec<(usize, T)>>
where
    T: for<'de> Deserialize<'de>,
    R: Read,
{
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(format!("reading line {lineno}"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        out.push((lineno, rec));
    }
    Ok(out)
}

/// Reads token log-probabilities keyed by (dialogue, utterance).
pub fn import_logprobs<R: Read>(source: R) -> Result<BTreeMap<UtteranceKey, TokenLogProbRecord>> {
    let mut map = BTreeMap::new();
    for (_, rec) in read_jsonl::<TokenLogProbRecord, _>(source)? {
        let key = (rec.dialogue_id.clone(), rec.utterance_id.clone());
        check_logprobs(&key, rec.tokens.len(), &rec.logprobs)?;
        map.insert(key, rec);
    }
    Ok(map)
}

pub fn import_gaze_logprobs<R: Read>(
    source: R,
) -> Result<BTreeMap<UtteranceKey, GazeLogProbRecord>> {
    let mut map = BTreeMap::new();
    for (line, rec) in read_jsonl::<GazeLogProbRecord, _>(source)? {
        let key = (rec.dialogue_id.clone(), rec.utterance_id.clone());
        check_logprobs(&key, rec.labels.len(), &rec.logprobs)?;
        if let Some(l) = rec
            .labels
            .iter()
            .find(|l| !(GAZE_LABEL_MIN..=GAZE_LABEL_MAX).contains(l))
        {
            return Err(Error::Parse {
                line,
                msg: format!("gaze label {l} outside [{GAZE_LABEL_MIN}, {GAZE_LABEL_MAX}]"),
            });
        }
        map.insert(key, rec);
    }
    Ok(map)
}

/// Checks imported token records against the corpus' normalized tokens.
pub fn align_logprobs<'a, I>(
    records: &BTreeMap<UtteranceKey, TokenLogProbRecord>,
    utterances: I,
) -> Result<()>
where
    I: IntoIterator<Item = &'a Utterance>,
{
    let by_key: HashMap<(&str, &str), &Utterance> = utterances
        .into_iter()
        .map(|u| ((u.dialogue_id.as_str(), u.id.as_str()), u))
        .collect();
    for (key, rec) in records {
        let alignment = |msg: String| Error::Alignment {
            dialogue_id: key.0.clone(),
            utterance_id: key.1.clone(),
            msg,
        };
        let Some(u) = by_key.get(&(key.0.as_str(), key.1.as_str())) else {
            return Err(alignment("no such utterance in the corpus".into()));
        };
        let expected = u.normalized_tokens();
        if expected != rec.tokens {
            let at = expected
                .iter()
                .zip(&rec.tokens)
                .position(|(a, b)| a != b)
                .unwrap_or(expected.len().min(rec.tokens.len()));
            return Err(alignment(format!(
                "token mismatch at index {at}: corpus has {:?}, record has {:?}",
                expected.get(at),
                rec.tokens.get(at)
            )));
        }
    }
    Ok(())
}

/// Export form of the corpus tokens for an external scorer: same schema as
/// [`TokenLogProbRecord`] without the log-probabilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenExportRecord {
    pub dialogue_id: String,
    pub utterance_id: String,
    pub tokens: Vec<String>,
}

pub fn export_tokens<'a, I>(utterances: I) -> Result<String>
where
    I: IntoIterator<Item = &'a Utterance>,
{
    let mut out = String::new();
    for u in utterances {
        let rec = TokenExportRecord {
            dialogue_id: u.dialogue_id.clone(),
            utterance_id: u.id.clone(),
            tokens: u.normalized_tokens(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}
