//! Synthetic explanation dialogues with controllable per-class cue signal.
//!
//! Each dialogue is cut into consecutive triples of utterances; the middle
//! utterance of every triple is annotated, so context windows never overlap.
//! A window's class shifts its utterances along three independent axes:
//!
//! | class | info | gaze | syntax |
//! |-------|------|------|--------|
//! | U     | high | high | high   |
//! | PU    | high | low  | low    |
//! | NU    | low  | high | low    |
//! | MU    | low  | low  | high   |
//!
//! scaled by the configured signal strengths. With all strengths at zero the
//! content is independent of the labels.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::UnderstandingState;
use crate::error::{Error, Result};

const CODES: [[f64; 3]; 4] = [
    [1.0, 1.0, 1.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
];
const COMMON_WORDS: usize = 20;
const MARKERS_PER_CLASS: usize = 3;
const SECONDS_PER_TOKEN: f64 = 0.3;
const PAUSE: f64 = 0.2;
const ON_EXPLAINER: u8 = 41;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalStrengths {
    pub info: f64,
    pub gaze: f64,
    pub syntax: f64,
    pub text: f64,
}

impl SignalStrengths {
    pub fn none() -> Self {
        SignalStrengths {
            info: 0.0,
            gaze: 0.0,
            syntax: 0.0,
            text: 0.0,
        }
    }

    pub fn uniform(s: f64) -> Self {
        SignalStrengths {
            info: s,
            gaze: s,
            syntax: s,
            text: s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_dialogues: usize,
    pub utterances_per_dialogue: usize,
    pub vocab_size: usize,
    pub signal: SignalStrengths,
    pub gaze_hz: f64,
    /// Relative class frequencies in U, PU, NU, MU order.
    pub priors: [f64; 4],
    /// Probability that a non-anchor utterance is spoken by the explainer.
    pub explainer_share: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_dialogues: 24,
            utterances_per_dialogue: 30,
            vocab_size: 400,
            signal: SignalStrengths::uniform(0.5),
            gaze_hz: 10.0,
            priors: [176.0, 162.0, 191.0, 113.0],
            explainer_share: 0.75,
            seed: 7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_dialogues == 0 || self.utterances_per_dialogue < 3 {
            return bad("need at least one dialogue of at least 3 utterances");
        }
        if self.vocab_size <= COMMON_WORDS {
            return bad("vocabulary must exceed 20 words");
        }
        let s = self.signal;
        if [s.info, s.gaze, s.syntax, s.text]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return bad("signal strengths must be finite and non-negative");
        }
        if !(self.gaze_hz > 0.0 && self.gaze_hz.is_finite()) {
            return bad("gaze rate must be positive");
        }
        if self.priors.iter().any(|p| !p.is_finite() || *p < 0.0)
            || self.priors.iter().sum::<f64>() <= 0.0
        {
            return bad("class priors must be non-negative with a positive sum");
        }
        if !(0.0..=1.0).contains(&self.explainer_share) {
            return bad("explainer share must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn annotation_count(&self) -> usize {
        self.n_dialogues * (self.utterances_per_dialogue / 3)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub conllu: String,
    pub gaze_csv: String,
    pub annotations_csv: String,
}

/// Per-class counts for `n` items by largest remainder; ties go to the
/// smaller class index.
pub fn allocate(priors: &[f64; 4], n: usize) -> [usize; 4] {
    let total: f64 = priors.iter().sum();
    let exact: Vec<f64> = priors.iter().map(|p| p / total * n as f64).collect();
    let mut counts = [0usize; 4];
    for (c, e) in exact.iter().enumerate() {
        counts[c] = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for c in order {
        if left == 0 {
            break;
        }
        counts[c] += 1;
        left -= 1;
    }
    counts
}

struct Shift {
    info: f64,
    gaze: f64,
    syntax: f64,
}

impl Shift {
    fn for_class(class: Option<usize>, s: &SignalStrengths) -> Self {
        match class {
            None => Shift {
                info: 0.0,
                gaze: 0.0,
                syntax: 0.0,
            },
            Some(c) => Shift {
                info: s.info * (CODES[c][0] - 0.5),
                gaze: s.gaze * (CODES[c][1] - 0.5),
                syntax: s.syntax * (CODES[c][2] - 0.5),
            },
        }
    }
}

struct Generated {
    words: Vec<String>,
    heads: Vec<usize>,
}

fn generate_utterance<R: Rng>(
    rng: &mut R,
    cfg: &GeneratorConfig,
    shift: &Shift,
    marker: Option<String>,
) -> Generated {
    let mean_len = 9.0 + 6.0 * shift.syntax;
    let len = (rng.gen_range(mean_len - 3.0..=mean_len + 3.0).round() as usize).max(2);
    let p_rare = (0.35 + 0.6 * shift.info).clamp(0.02, 0.98);
    let p_deep = (0.45 + 0.5 * shift.syntax).clamp(0.02, 0.98);

    let mut words: Vec<String> = (0..len)
        .map(|_| {
            let idx = if rng.gen_bool(p_rare) {
                rng.gen_range(COMMON_WORDS..cfg.vocab_size)
            } else {
                rng.gen_range(0..COMMON_WORDS)
            };
            format!("w{idx}")
        })
        .collect();
    if let Some(m) = marker {
        let at = rng.gen_range(0..len);
        words[at] = m;
    }
    if let Some(first) = words.first_mut() {
        *first = capitalize(first);
    }

    // Projective attachment: each new token hangs off a node on the right
    // spine (the path from the root to the previous token).
    let mut heads = vec![0usize];
    let mut spine = vec![1usize];
    for pos in 2..=len {
        let at = if rng.gen_bool(p_deep) {
            spine.len() - 1
        } else {
            rng.gen_range(0..spine.len())
        };
        heads.push(spine[at]);
        spine.truncate(at + 1);
        spine.push(pos);
    }
    words.push(".".to_string());
    heads.push(1);
    Generated { words, heads }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Deterministic in `config` (including the seed).
pub fn generate_corpus(config: &GeneratorConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let counts = allocate(&config.priors, config.annotation_count());
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    labels.shuffle(&mut rng);
    let mut labels = labels.into_iter();

    let mut conllu = String::new();
    let mut gaze_csv = String::from("dialogue_id,time,label\n");
    let mut annotations_csv = String::from("dialogue_id,utterance_id,state\n");
    let p_marker = (0.5 * config.signal.text).min(1.0);

    for d in 0..config.n_dialogues {
        let dialogue = format!("d{:03}", d + 1);
        let mut t = 0.0f64;
        // (start, end, churn) per window, for the gaze process
        let mut churn_spans: Vec<(f64, f64, f64)> = Vec::new();
        let m = config.utterances_per_dialogue;
        let mut window_class: Option<usize> = None;
        let mut window_start = 0.0;

        for i in 0..m {
            let in_triple = i < (m / 3) * 3;
            let role = i % 3;
            if in_triple && role == 0 {
                window_class = labels.next();
                window_start = t;
            }
            let class = if in_triple { window_class } else { None };
            let shift = Shift::for_class(class, &config.signal);
            let explainer = role == 1 && in_triple || rng.gen_bool(config.explainer_share);
            let marker = match class {
                Some(c) if rng.gen_bool(p_marker) => Some(format!(
                    "m{}{}",
                    UnderstandingState::ALL[c].code().to_lowercase(),
                    rng.gen_range(0..MARKERS_PER_CLASS)
                )),
                _ => None,
            };
            let g = generate_utterance(&mut rng, config, &shift, marker);
            let start = t;
            let end = start + SECONDS_PER_TOKEN * g.words.len() as f64;
            let utt = format!("u{:03}", i + 1);
            let _ = writeln!(conllu, "# dialogue_id = {dialogue}");
            let _ = writeln!(conllu, "# utterance_id = {utt}");
            let speaker = if explainer { "explainer" } else { "explainee" };
            let _ = writeln!(conllu, "# speaker = {speaker}");
            let _ = writeln!(conllu, "# start = {start:.3}");
            let _ = writeln!(conllu, "# end = {end:.3}");
            for (j, (w, h)) in g.words.iter().zip(&g.heads).enumerate() {
                let rel = if *h == 0 {
                    "root"
                } else if w == "." {
                    "punct"
                } else {
                    "dep"
                };
                let _ = writeln!(conllu, "{}\t{w}\t_\t_\t_\t_\t{h}\t{rel}\t_\t_", j + 1);
            }
            conllu.push('\n');

            if in_triple && role == 1 {
                if let Some(c) = class {
                    let _ = writeln!(
                        annotations_csv,
                        "{dialogue},{utt},{}",
                        UnderstandingState::ALL[c].code()
                    );
                }
            }
            t = end + PAUSE;
            if in_triple && role == 2 {
                let churn = (0.25 + 0.4 * shift.gaze).clamp(0.02, 0.9);
                churn_spans.push((window_start, end, churn));
            }
        }

        let step = 1.0 / config.gaze_hz;
        let mut label = ON_EXPLAINER;
        let mut k = 0usize;
        let mut span_idx = 0;
        loop {
            let time = k as f64 * step;
            if time > t {
                break;
            }
            while span_idx < churn_spans.len() && churn_spans[span_idx].1 < time {
                span_idx += 1;
            }
            let churn = match churn_spans.get(span_idx) {
                Some(&(s, e, c)) if time >= s && time <= e => c,
                _ => 0.25,
            };
            if rng.gen_bool(churn) {
                label = if rng.gen_bool(0.5) {
                    ON_EXPLAINER
                } else {
                    rng.gen_range(1..=81)
                };
            }
            let _ = writeln!(gaze_csv, "{dialogue},{time:.3},{label}");
            k += 1;
        }
    }

    Ok(SyntheticCorpus {
        conllu,
        gaze_csv,
        annotations_csv,
    })
}
