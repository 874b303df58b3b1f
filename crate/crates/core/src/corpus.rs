//! Transcript, gaze and annotation ingestion, plus context-window assembly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GAZE_LABEL_MIN: u8 = 1;
pub const GAZE_LABEL_MAX: u8 = 81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    Explainer,
    Explainee,
}

impl FromStr for Speaker {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "explainer" | "er" => Ok(Speaker::Explainer),
            "explainee" | "ee" => Ok(Speaker::Explainee),
            other => Err(format!("unknown speaker '{other}'")),
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::Explainer => "explainer",
            Speaker::Explainee => "explainee",
        })
    }
}

/// One of the four self-reported understanding levels. The discriminant is
/// the class index used everywhere downstream (and for tie-breaking).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnderstandingState {
    Understanding = 0,
    PartialUnderstanding = 1,
    NonUnderstanding = 2,
    Misunderstanding = 3,
}

impl UnderstandingState {
    pub const ALL: [UnderstandingState; 4] = [
        UnderstandingState::Understanding,
        UnderstandingState::PartialUnderstanding,
        UnderstandingState::NonUnderstanding,
        UnderstandingState::Misunderstanding,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            UnderstandingState::Understanding => "U",
            UnderstandingState::PartialUnderstanding => "PU",
            UnderstandingState::NonUnderstanding => "NU",
            UnderstandingState::Misunderstanding => "MU",
        }
    }
}

impl FromStr for UnderstandingState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "U" => Ok(UnderstandingState::Understanding),
            "PU" => Ok(UnderstandingState::PartialUnderstanding),
            "NU" => Ok(UnderstandingState::NonUnderstanding),
            "MU" => Ok(UnderstandingState::Misunderstanding),
            other => Err(format!("unknown state '{other}'")),
        }
    }
}

impl fmt::Display for UnderstandingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    /// 1-based position within the utterance.
    pub position: usize,
    pub surface: String,
    /// `Some(0)` attaches to the virtual root; `None` when the utterance has no tree.
    pub head: Option<usize>,
    pub deprel: String,
    pub start_time: Option<f64>,
    pub end_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub dialogue_id: String,
    pub speaker: Speaker,
    pub tokens: Vec<Token>,
    pub start_time: f64,
    pub end_time: f64,
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// True when every token carries a head; validated trees only.
    pub fn is_parsed(&self) -> bool {
        !self.tokens.is_empty() && self.tokens.iter().all(|t| t.head.is_some())
    }

    /// Time span used for gaze alignment: token times when every token has
    /// them, the utterance metadata span otherwise.
    pub fn span(&self) -> (f64, f64) {
        let timed: Option<Vec<(f64, f64)>> = self
            .tokens
            .iter()
            .map(|t| t.start_time.zip(t.end_time))
            .collect();
        match timed {
            Some(times) if !times.is_empty() => {
                let start = times.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
                let end = times.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
                (start, end)
            }
            _ => (self.start_time, self.end_time),
        }
    }

    /// Lowercased surface tokens with edge punctuation stripped; tokens that
    /// are pure punctuation vanish.
    pub fn normalized_tokens(&self) -> Vec<String> {
        self.tokens
            .iter()
            .flat_map(|t| t.surface.split_whitespace())
            .filter_map(normalize_token)
            .collect()
    }
}

pub fn normalize_token(raw: &str) -> Option<String> {
    let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub time: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnderstandingAnnotation {
    pub dialogue_id: String,
    pub utterance_id: String,
    pub state: UnderstandingState,
}

#[derive(Debug, Clone)]
pub struct ContextWindow {
    pub id: String,
    pub annotation: UnderstandingAnnotation,
    pub prev: Option<Arc<Utterance>>,
    pub curr: Arc<Utterance>,
    pub next: Option<Arc<Utterance>>,
    pub gaze: Vec<GazeSample>,
}

impl ContextWindow {
    /// Utterances in dialogue order: prev, curr, next.
    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.prev
            .iter()
            .chain(std::iter::once(&self.curr))
            .chain(self.next.iter())
            .map(|u| u.as_ref())
    }

    pub fn span(&self) -> (f64, f64) {
        let start = self.prev.as_ref().unwrap_or(&self.curr).span().0;
        let end = self.next.as_ref().unwrap_or(&self.curr).span().1;
        (start, end)
    }

    pub fn gaze_labels(&self) -> Vec<u8> {
        self.gaze.iter().map(|g| g.label).collect()
    }
}

/// Parsed transcript file.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub utterances: Vec<Utterance>,
    /// Multi-word-token and empty-node lines that were skipped.
    pub warnings: usize,
}

#[derive(Default)]
struct Block {
    first_line: usize,
    meta: HashMap<String, String>,
    tokens: Vec<(usize, Token)>,
}

pub fn parse_conllu<R: Read>(source: R) -> Result<Transcript> {
    let reader = BufReader::new(source);
    let mut out = Transcript::default();
    let mut block: Option<Block> = None;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(format!("reading line {lineno}"), e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);

        if line.trim().is_empty() {
            if let Some(b) = block.take() {
                out.utterances.push(finish_block(b)?);
            }
            continue;
        }
        let b = block.get_or_insert_with(|| Block {
            first_line: lineno,
            ..Default::default()
        });

        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                b.meta
                    .insert(key.trim().to_string(), value.trim().to_string());
            }
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            out.warnings += 1;
            continue;
        }
        let position: usize = cols[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("invalid token id '{}'", cols[0]),
        })?;
        let head = match cols[6] {
            "_" => None,
            h => Some(h.parse::<usize>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid head '{h}'"),
            })?),
        };
        let (start_time, end_time) = parse_misc_times(cols[9], lineno)?;
        b.tokens.push((
            lineno,
            Token {
                position,
                surface: cols[1].to_string(),
                head,
                deprel: cols[7].to_string(),
                start_time,
                end_time,
            },
        ));
    }
    if let Some(b) = block.take() {
        out.utterances.push(finish_block(b)?);
    }
    check_dialogue_order(&out.utterances)?;
    Ok(out)
}

fn parse_misc_times(misc: &str, line: usize) -> Result<(Option<f64>, Option<f64>)> {
    let mut start = None;
    let mut end = None;
    if misc == "_" {
        return Ok((None, None));
    }
    for entry in misc.split('|') {
        let Some((k, v)) = entry.split_once('=') else {
            continue;
        };
        let slot = match k {
            "Start" => &mut start,
            "End" => &mut end,
            _ => continue,
        };
        let t: f64 = v.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid time '{v}' in MISC"),
        })?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Parse {
                line,
                msg: format!("time {v} must be finite and non-negative"),
            });
        }
        *slot = Some(t);
    }
    if let (Some(s), Some(e)) = (start, end) {
        if s > e {
            return Err(Error::Parse {
                line,
                msg: format!("token start {s} after end {e}"),
            });
        }
    }
    Ok((start, end))
}

fn required_meta<'a>(b: &'a Block, key: &str) -> Result<&'a str> {
    b.meta
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Parse {
            line: b.first_line,
            msg: format!("missing required metadata '# {key} = ...'"),
        })
}

fn meta_time(b: &Block, key: &str) -> Result<f64> {
    let raw = required_meta(b, key)?;
    match raw.parse::<f64>() {
        Ok(t) if t.is_finite() && t >= 0.0 => Ok(t),
        _ => Err(Error::Parse {
            line: b.first_line,
            msg: format!("invalid '{key}' time '{raw}'"),
        }),
    }
}

fn finish_block(b: Block) -> Result<Utterance> {
    let dialogue_id = required_meta(&b, "dialogue_id")?.to_string();
    let id = required_meta(&b, "utterance_id")?.to_string();
    let speaker = required_meta(&b, "speaker")?
        .parse::<Speaker>()
        .map_err(|msg| Error::Parse {
            line: b.first_line,
            msg,
        })?;
    let start_time = meta_time(&b, "start")?;
    let end_time = meta_time(&b, "end")?;
    let structure = |msg: String| Error::Structure {
        utterance: id.clone(),
        msg,
    };
    if start_time > end_time {
        return Err(structure(format!(
            "start {start_time} is after end {end_time}"
        )));
    }

    let tokens: Vec<Token> = b.tokens.into_iter().map(|(_, t)| t).collect();
    for (i, t) in tokens.iter().enumerate() {
        if t.position != i + 1 {
            return Err(structure(format!(
                "token positions must be 1..N consecutive, found {} at index {}",
                t.position,
                i + 1
            )));
        }
    }
    let utt = Utterance {
        id: id.clone(),
        dialogue_id,
        speaker,
        tokens,
        start_time,
        end_time,
    };
    validate_tree(&utt)?;
    Ok(utt)
}

/// Checks the head graph of a parsed utterance: heads in range, no
/// self-loops, exactly one root and no cycles. Unparsed utterances (every
/// head `_`) pass; a partial tree does not.
pub fn validate_tree(utt: &Utterance) -> Result<()> {
    let structure = |msg: String| Error::Structure {
        utterance: utt.id.clone(),
        msg,
    };
    let n = utt.tokens.len();
    let missing = utt.tokens.iter().filter(|t| t.head.is_none()).count();
    if missing == n {
        return Ok(());
    }
    if missing > 0 {
        return Err(structure(format!("{missing} of {n} tokens lack a head")));
    }
    let heads: Vec<usize> = utt.tokens.iter().map(|t| t.head.unwrap()).collect();
    let mut roots = 0;
    for (i, &h) in heads.iter().enumerate() {
        let pos = i + 1;
        if h == pos {
            return Err(structure(format!("token {pos} is its own head")));
        }
        if h > n {
            return Err(structure(format!(
                "token {pos} has head {h} beyond length {n}"
            )));
        }
        if h == 0 {
            roots += 1;
        }
    }
    if roots != 1 {
        return Err(structure(format!(
            "expected exactly one root, found {roots}"
        )));
    }
    for start in 1..=n {
        let mut node = start;
        let mut steps = 0;
        while node != 0 {
            node = heads[node - 1];
            steps += 1;
            if steps > n {
                return Err(structure(format!(
                    "cycle in head graph through token {start}"
                )));
            }
        }
    }
    Ok(())
}

fn check_dialogue_order(utterances: &[Utterance]) -> Result<()> {
    let mut last: HashMap<&str, &Utterance> = HashMap::new();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    for u in utterances {
        if !seen.insert((&u.dialogue_id, &u.id)) {
            return Err(Error::Structure {
                utterance: u.id.clone(),
                msg: format!("duplicate utterance id in dialogue {}", u.dialogue_id),
            });
        }
        if let Some(prev) = last.get(u.dialogue_id.as_str()) {
            if prev.end_time > u.start_time {
                return Err(Error::Structure {
                    utterance: u.id.clone(),
                    msg: format!(
                        "starts at {} before preceding utterance {} ends at {}",
                        u.start_time, prev.id, prev.end_time
                    ),
                });
            }
        }
        last.insert(&u.dialogue_id, u);
    }
    Ok(())
}

/// Serializes utterances back to CoNLL-U. Columns the toolkit does not keep
/// are written as `_`.
pub fn write_conllu(utterances: &[Utterance]) -> String {
    let mut out = String::new();
    for u in utterances {
        let _ = writeln!(out, "# dialogue_id = {}", u.dialogue_id);
        let _ = writeln!(out, "# utterance_id = {}", u.id);
        let _ = writeln!(out, "# speaker = {}", u.speaker);
        let _ = writeln!(out, "# start = {}", u.start_time);
        let _ = writeln!(out, "# end = {}", u.end_time);
        for t in &u.tokens {
            let head = t.head.map_or_else(|| "_".to_string(), |h| h.to_string());
            let mut misc = Vec::new();
            if let Some(s) = t.start_time {
                misc.push(format!("Start={s}"));
            }
            if let Some(e) = t.end_time {
                misc.push(format!("End={e}"));
            }
            let misc = if misc.is_empty() {
                "_".to_string()
            } else {
                misc.join("|")
            };
            let deprel = if t.deprel.is_empty() { "_" } else { &t.deprel };
            let _ = writeln!(
                out,
                "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t{}",
                t.position, t.surface, head, deprel, misc
            );
        }
        out.push('\n');
    }
    out
}

/// Gaze samples grouped by dialogue, each list sorted by time.
pub type GazeStreams = BTreeMap<String, Vec<GazeSample>>;

pub fn parse_gaze<R: Read>(source: R) -> Result<GazeStreams> {
    let reader = BufReader::new(source);
    let mut streams = GazeStreams::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(format!("reading gaze line {lineno}"), e))?;
        let line = line.trim_end_matches('\r');
        if lineno == 1 {
            expect_header(line, "dialogue_id,time,label", lineno)?;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 3 comma-separated fields, found {}", cols.len()),
            });
        }
        let time: f64 = cols[1]
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("invalid time '{}'", cols[1]),
            })?;
        let label: i64 = cols[2].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("invalid label '{}'", cols[2]),
        })?;
        if !(GAZE_LABEL_MIN as i64..=GAZE_LABEL_MAX as i64).contains(&label) {
            return Err(Error::Validation(format!(
                "row {lineno}: gaze label {label} outside [{GAZE_LABEL_MIN}, {GAZE_LABEL_MAX}]"
            )));
        }
        let stream = streams.entry(cols[0].to_string()).or_default();
        if let Some(last) = stream.last() {
            if time < last.time {
                return Err(Error::Validation(format!(
                    "row {lineno}: time {time} decreases within dialogue {} (previous {})",
                    cols[0], last.time
                )));
            }
        }
        stream.push(GazeSample {
            time,
            label: label as u8,
        });
    }
    Ok(streams)
}

pub fn parse_annotations<R: Read>(source: R) -> Result<Vec<UnderstandingAnnotation>> {
    let reader = BufReader::new(source);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(format!("reading annotation line {lineno}"), e))?;
        let line = line.trim_end_matches('\r');
        if lineno == 1 {
            expect_header(line, "dialogue_id,utterance_id,state", lineno)?;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 3 comma-separated fields, found {}", cols.len()),
            });
        }
        let state = cols[2]
            .parse()
            .map_err(|msg| Error::Parse { line: lineno, msg })?;
        out.push(UnderstandingAnnotation {
            dialogue_id: cols[0].to_string(),
            utterance_id: cols[1].to_string(),
            state,
        });
    }
    Ok(out)
}

fn expect_header(line: &str, expected: &str, lineno: usize) -> Result<()> {
    let got: String = line.trim_start_matches('\u{feff}').replace(' ', "");
    if got != expected {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected header '{expected}', found '{line}'"),
        });
    }
    Ok(())
}

/// Per-state annotation counts in class-index order.
pub fn state_counts(annotations: &[UnderstandingAnnotation]) -> [usize; 4] {
    let mut counts = [0; 4];
    for a in annotations {
        counts[a.state.index()] += 1;
    }
    counts
}

/// One window per annotation, in annotation order. Neighbours are the
/// adjacent utterances of the same dialogue in file order; gaze samples are
/// those whose time falls inside the window's combined span.
pub fn build_context_windows(
    utterances: &[Arc<Utterance>],
    annotations: &[UnderstandingAnnotation],
    gaze: &GazeStreams,
) -> Result<Vec<ContextWindow>> {
    let mut dialogues: HashMap<&str, Vec<&Arc<Utterance>>> = HashMap::new();
    for u in utterances {
        dialogues.entry(&u.dialogue_id).or_default().push(u);
    }
    let mut index: HashMap<(&str, &str), usize> = HashMap::new();
    for list in dialogues.values() {
        for (i, u) in list.iter().enumerate() {
            index.insert((&u.dialogue_id, &u.id), i);
        }
    }

    let mut id_counts: HashMap<String, usize> = HashMap::new();
    let mut windows = Vec::with_capacity(annotations.len());
    for ann in annotations {
        let key = (ann.dialogue_id.as_str(), ann.utterance_id.as_str());
        let Some(&pos) = index.get(&key) else {
            return Err(Error::Resolution {
                dialogue_id: ann.dialogue_id.clone(),
                utterance_id: ann.utterance_id.clone(),
            });
        };
        let list = &dialogues[ann.dialogue_id.as_str()];
        let curr = Arc::clone(list[pos]);
        let prev = pos.checked_sub(1).map(|p| Arc::clone(list[p]));
        let next = list.get(pos + 1).map(|u| Arc::clone(u));

        let base = format!("{}:{}", ann.dialogue_id, ann.utterance_id);
        let n = id_counts.entry(base.clone()).or_insert(0);
        *n += 1;
        let id = if *n == 1 { base } else { format!("{base}#{n}") };

        let mut window = ContextWindow {
            id,
            annotation: ann.clone(),
            prev,
            curr,
            next,
            gaze: Vec::new(),
        };
        let (start, end) = window.span();
        if let Some(stream) = gaze.get(&ann.dialogue_id) {
            window.gaze = samples_in(stream, start, end).to_vec();
        }
        windows.push(window);
    }
    Ok(windows)
}

/// Slice of a time-sorted stream with `start <= time <= end`.
pub fn samples_in(stream: &[GazeSample], start: f64, end: f64) -> &[GazeSample] {
    let lo = stream.partition_point(|g| g.time < start);
    let hi = stream.partition_point(|g| g.time <= end);
    if lo >= hi {
        &[]
    } else {
        &stream[lo..hi]
    }
}
