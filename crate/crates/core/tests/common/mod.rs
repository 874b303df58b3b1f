//! Independent reference implementations for the integration suites. None
//! of this goes through the library's own parsing or scoring code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap()
}

pub fn fraction(s: &str) -> f64 {
    match s.split_once('/') {
        Some((n, d)) => n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap(),
        None => s.parse().unwrap(),
    }
}

/// Sentence from a CoNLL-U file, read column by column.
#[derive(Debug, Clone)]
pub struct RawSentence {
    pub meta: HashMap<String, String>,
    pub forms: Vec<String>,
    /// `None` for `_`.
    pub heads: Vec<Option<usize>>,
    pub misc: Vec<String>,
}

pub fn raw_sentences(text: &str) -> Vec<RawSentence> {
    let mut out = Vec::new();
    for block in text.split("\n\n") {
        let mut s = RawSentence {
            meta: HashMap::new(),
            forms: Vec::new(),
            heads: Vec::new(),
            misc: Vec::new(),
        };
        for line in block.lines() {
            if let Some(c) = line.strip_prefix("# ") {
                if let Some((k, v)) = c.split_once(" = ") {
                    s.meta.insert(k.to_string(), v.to_string());
                }
            } else if !line.trim().is_empty() {
                let cols: Vec<&str> = line.split('\t').collect();
                s.forms.push(cols[1].to_string());
                s.heads.push(cols[6].parse().ok());
                s.misc.push(cols[9].to_string());
            }
        }
        if !s.forms.is_empty() {
            out.push(s);
        }
    }
    out
}

impl RawSentence {
    /// Token MISC times when every token has them, metadata times otherwise.
    pub fn span(&self) -> (f64, f64) {
        let field = |m: &str, key: &str| -> Option<f64> {
            m.split('|')
                .find_map(|kv| kv.strip_prefix(key))
                .map(|v| v.parse().unwrap())
        };
        let starts: Option<Vec<f64>> = self.misc.iter().map(|m| field(m, "Start=")).collect();
        let ends: Option<Vec<f64>> = self.misc.iter().map(|m| field(m, "End=")).collect();
        match (starts, ends) {
            (Some(s), Some(e)) => (
                s.iter().copied().fold(f64::INFINITY, f64::min),
                e.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            _ => (
                self.meta["start"].parse().unwrap(),
                self.meta["end"].parse().unwrap(),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteTree {
    pub length: usize,
    pub heads: usize,
    pub depth: usize,
    pub arc_sum: usize,
    pub arcs: usize,
}

/// Counts by walking every token to the root.
pub fn brute_tree(heads: &[usize]) -> BruteTree {
    let distinct: BTreeSet<usize> = heads.iter().copied().filter(|&h| h > 0).collect();
    let mut depth = 0;
    for start in 1..=heads.len() {
        let mut node = start;
        let mut d = 1;
        while heads[node - 1] != 0 {
            node = heads[node - 1];
            d += 1;
        }
        depth = depth.max(d);
    }
    let mut arc_sum = 0;
    let mut arcs = 0;
    for (i, &h) in heads.iter().enumerate() {
        if h > 0 {
            arc_sum += h.abs_diff(i + 1);
            arcs += 1;
        }
    }
    BruteTree {
        length: heads.len(),
        heads: distinct.len(),
        depth,
        arc_sum,
        arcs,
    }
}

pub fn sc_formula(length: f64, alpha: f64, beta: f64, lambda: f64) -> f64 {
    if alpha > 0.0 {
        lambda * length / alpha + (1.0 - lambda) * beta
    } else {
        (1.0 - lambda) * beta
    }
}

/// Trim non-alphanumerics at both ends and lowercase.
pub fn norm_token(t: &str) -> Option<String> {
    let s = t
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    (!s.is_empty()).then_some(s)
}

/// Naive add-k n-gram model keyed on strings.
pub struct NgramOracle {
    pub order: usize,
    pub k: f64,
    pub vocab: BTreeSet<String>,
    pub counts: HashMap<Vec<String>, HashMap<String, f64>>,
}

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

impl NgramOracle {
    pub fn train(
        seqs: &[Vec<String>],
        order: usize,
        k: f64,
        fixed_vocab: Option<Vec<String>>,
    ) -> Self {
        let mut vocab: BTreeSet<String> = fixed_vocab.unwrap_or_default().into_iter().collect();
        for s in seqs {
            vocab.extend(s.iter().cloned());
        }
        let mut counts: HashMap<Vec<String>, HashMap<String, f64>> = HashMap::new();
        for s in seqs {
            let mut padded = vec![BOS.to_string(); order - 1];
            padded.extend(s.iter().cloned());
            padded.push(EOS.to_string());
            for i in order - 1..padded.len() {
                let ctx = padded[i + 1 - order..i].to_vec();
                *counts
                    .entry(ctx)
                    .or_default()
                    .entry(padded[i].clone())
                    .or_default() += 1.0;
            }
        }
        NgramOracle {
            order,
            k,
            vocab,
            counts,
        }
    }

    /// Vocabulary plus EOS and UNK.
    pub fn v(&self) -> f64 {
        self.vocab.len() as f64 + 2.0
    }

    pub fn map(&self, s: &str) -> String {
        if self.vocab.contains(s) {
            s.to_string()
        } else {
            UNK.to_string()
        }
    }

    pub fn prob(&self, ctx: &[String], sym: &str) -> f64 {
        let (c, total) = match self.counts.get(ctx) {
            Some(m) => (m.get(sym).copied().unwrap_or(0.0), m.values().sum()),
            None => (0.0, 0.0),
        };
        (c + self.k) / (total + self.k * self.v())
    }

    pub fn surprisals(&self, seq: &[String]) -> Vec<f64> {
        let mut padded = vec![BOS.to_string(); self.order - 1];
        let mapped: Vec<String> = seq.iter().map(|s| self.map(s)).collect();
        padded.extend(mapped.iter().cloned());
        (0..mapped.len())
            .map(|i| {
                let j = i + self.order - 1;
                -self.prob(&padded[j + 1 - self.order..j], &padded[j]).ln()
            })
            .collect()
    }
}

/// Oracle cue values `[info, gaze, sc, adl]` for each toy window, computed
/// from the raw fixture files.
pub fn toy_window_oracle() -> Vec<(String, [f64; 4])> {
    let text = read_fixture("toy/transcripts.conllu");
    let raw = raw_sentences(&text);

    // Word oracle: bigram, k = 0.1, trained on every utterance.
    let word_seqs: Vec<Vec<String>> = raw
        .iter()
        .map(|s| s.forms.iter().filter_map(|f| norm_token(f)).collect())
        .collect();
    let words = NgramOracle::train(&word_seqs, 2, 0.1, None);

    // Gaze oracle: trigram over whole dialogue streams, fixed 81-label vocabulary.
    let mut streams: BTreeMap<String, Vec<(f64, String)>> = BTreeMap::new();
    for line in read_fixture("toy/gaze.csv").lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        streams
            .entry(c[0].to_string())
            .or_default()
            .push((c[1].parse().unwrap(), c[2].to_string()));
    }
    let gaze_seqs: Vec<Vec<String>> = streams
        .values()
        .map(|s| s.iter().map(|x| x.1.clone()).collect())
        .collect();
    let labels: Vec<String> = (1..=81).map(|l: u32| l.to_string()).collect();
    let gaze = NgramOracle::train(&gaze_seqs, 3, 0.1, Some(labels));
    assert_eq!(gaze.v(), 83.0);

    let mut out = Vec::new();
    for line in read_fixture("toy/annotations.csv").lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        let (d, u) = (c[0], c[1]);
        let pos = raw
            .iter()
            .position(|s| s.meta["dialogue_id"] == d && s.meta["utterance_id"] == u)
            .unwrap();
        let same = |i: usize| raw.get(i).filter(|s| s.meta["dialogue_id"] == d);
        let window: Vec<&RawSentence> =
            [pos.checked_sub(1).and_then(same), same(pos), same(pos + 1)]
                .into_iter()
                .flatten()
                .collect();
        let explainer: Vec<&RawSentence> = window
            .iter()
            .copied()
            .filter(|s| s.meta["speaker"] == "explainer")
            .collect();

        let mut surprisals = Vec::new();
        for s in &explainer {
            let toks: Vec<String> = s.forms.iter().filter_map(|f| norm_token(f)).collect();
            surprisals.extend(words.surprisals(&toks));
        }
        let info = mean(&surprisals);

        let start = window
            .iter()
            .map(|s| s.span().0)
            .fold(f64::INFINITY, f64::min);
        let end = window
            .iter()
            .map(|s| s.span().1)
            .fold(f64::NEG_INFINITY, f64::max);
        let in_span: Vec<String> = streams[d]
            .iter()
            .filter(|(t, _)| *t >= start && *t <= end)
            .map(|x| x.1.clone())
            .collect();
        let ent = mean(&gaze.surprisals(&in_span));

        // Syntax cues use the same explainer scope as the text cues.
        let trees: Vec<BruteTree> = explainer
            .iter()
            .filter(|s| s.heads.iter().all(Option::is_some))
            .map(|s| brute_tree(&s.heads.iter().map(|h| h.unwrap()).collect::<Vec<_>>()))
            .collect();
        let l: usize = trees.iter().map(|t| t.length).sum();
        let a: usize = trees.iter().map(|t| t.heads).sum();
        let b = trees.iter().map(|t| t.depth).max().unwrap();
        let sc = sc_formula(l as f64, a as f64, b as f64, 0.5);
        let adl = trees.iter().map(|t| t.arc_sum).sum::<usize>() as f64
            / trees.iter().map(|t| t.arcs).sum::<usize>() as f64;
        out.push((format!("{d}:{u}"), [info, ent, sc, adl]));
    }
    out
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Kruskal-Wallis by definition: mid-ranks via pairwise counting, tie
/// correction from tie-group sizes, p from the chi-squared survival function.
pub fn kw_reference(groups: &[Vec<f64>]) -> (f64, f64) {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let rank = |x: f64| {
        let less = all.iter().filter(|&&y| y < x).count() as f64;
        let equal = all.iter().filter(|&&y| y == x).count() as f64;
        less + (equal + 1.0) / 2.0
    };
    let mut s = 0.0;
    for g in groups {
        let r: f64 = g.iter().map(|&x| rank(x)).sum();
        s += r * r / g.len() as f64;
    }
    let h = 12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0);
    let mut seen: Vec<f64> = Vec::new();
    let mut ties = 0.0;
    for &x in &all {
        if !seen.contains(&x) {
            seen.push(x);
            let t = all.iter().filter(|&&y| y == x).count() as f64;
            ties += t * t * t - t;
        }
    }
    let h = h / (1.0 - ties / (n * n * n - n));
    let df = groups.len() as f64 - 1.0;
    let p = ChiSquared::new(df).unwrap().sf(h);
    (h, p)
}

pub fn normal_two_sided_reference(z: f64) -> f64 {
    2.0 * Normal::new(0.0, 1.0).unwrap().sf(z.abs())
}

pub fn golden_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name)
}

/// Runs the binary in `dir` with the seed taken from flags or config only.
pub fn cueload(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cueload"))
        .args(args)
        .current_dir(dir)
        .env_remove("CUELOAD_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn cueload_ok(dir: &Path, args: &[&str]) -> Output {
    let out = cueload(dir, args);
    assert!(
        out.status.success(),
        "cueload {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub const CORPUS_ARGS: [&str; 6] = [
    "--transcripts",
    "transcripts.conllu",
    "--gaze",
    "gaze.csv",
    "--annotations",
    "annotations.csv",
];

/// `synth -> quantify -> analyze -> classify -> report` in `dir` on a small
/// fixed-seed corpus.
pub fn golden_pipeline(dir: &Path) {
    std::fs::write(
        dir.join("run.toml"),
        "seed = 11\nfolds = 5\nrf-trees = 30\ndialogues = 8\nutterances = 15\n",
    )
    .unwrap();
    cueload_ok(dir, &["synth", "--config", "run.toml"]);
    for cmd in ["quantify", "analyze", "classify"] {
        cueload_ok(
            dir,
            &[&[cmd, "--config", "run.toml"], &CORPUS_ARGS[..]].concat(),
        );
    }
    cueload_ok(dir, &["report", "--config", "run.toml"]);
}

/// Copies the toy fixture into `dir`.
pub fn stage_toy(dir: &Path) {
    for f in ["transcripts.conllu", "gaze.csv", "annotations.csv"] {
        std::fs::copy(fixture(&format!("toy/{f}")), dir.join(f)).unwrap();
    }
}

/// Regular files in `dir`, by name.
pub fn dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

/// Compares `dir` with the committed golden set; `CUELOAD_BLESS=1` rewrites it.
pub fn check_golden(dir: &Path, name: &str) -> Result<(), String> {
    let golden = golden_dir(name);
    let got = dir_files(dir);
    if std::env::var("CUELOAD_BLESS").is_ok_and(|v| v == "1") {
        let _ = std::fs::remove_dir_all(&golden);
        std::fs::create_dir_all(&golden).unwrap();
        for (f, b) in &got {
            std::fs::write(golden.join(f), b).unwrap();
        }
        return Ok(());
    }
    let want = dir_files(&golden);
    if want.keys().ne(got.keys()) {
        return Err(format!(
            "file sets differ: {:?} vs {:?}",
            got.keys(),
            want.keys()
        ));
    }
    for (f, b) in &want {
        if got[f] != *b {
            return Err(format!("{f} differs from the golden copy"));
        }
    }
    Ok(())
}
