use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cueload::app::{self, RunConfig};
use cueload::Error;

/// Cognitive-load cue quantification for explanation dialogues.
///
/// Options are resolved as: flag, then CUELOAD_SEED (seed only), then the
/// --config file, then built-in defaults.
#[derive(Parser)]
#[command(name = "cueload", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (transcripts, gaze, annotations).
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Compute the four cues per annotated context window.
    Quantify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Kruskal-Wallis, Dunn post-hoc tests and box-plot data per cue.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Train and evaluate classifiers on text-only and text+cue features.
    Classify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        classify: ClassifyArgs,
    },
    /// Merge the outputs found in --out into report.json.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Key-value option file (TOML syntax, keys as flag names).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory [default: .]
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Random seed [default: 42]
    #[arg(long, env = "CUELOAD_SEED")]
    seed: Option<String>,
}

#[derive(Args)]
struct CorpusArgs {
    /// CoNLL-U transcripts.
    #[arg(long, value_name = "FILE")]
    transcripts: Option<String>,
    /// Gaze CSV (dialogue_id,time,label); gaze entropy is missing without it.
    #[arg(long, value_name = "FILE")]
    gaze: Option<String>,
    /// Annotation CSV (dialogue_id,utterance_id,state).
    #[arg(long, value_name = "FILE")]
    annotations: Option<String>,
    /// Syntactic complexity weight in [0, 1] [default: 0.5]
    #[arg(long)]
    lambda: Option<String>,
    /// Word model order [default: 2]
    #[arg(long)]
    ngram_order: Option<String>,
    /// Gaze model order [default: 3]
    #[arg(long)]
    gaze_order: Option<String>,
    /// Additive smoothing constant [default: 0.1]
    #[arg(long)]
    smoothing_k: Option<String>,
    /// Speakers feeding text cues and text features: explainer|both [default: explainer]
    #[arg(long)]
    text_scope: Option<String>,
    /// Imported token log-probabilities (JSON lines).
    #[arg(long, value_name = "FILE")]
    logprobs: Option<String>,
    /// Imported gaze log-probabilities (JSON lines).
    #[arg(long, value_name = "FILE")]
    gaze_logprobs: Option<String>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Training share of the hold-out split [default: 0.7]
    #[arg(long)]
    split_ratio: Option<String>,
    /// Cross-validation folds [default: 10]
    #[arg(long)]
    folds: Option<String>,
    /// Normalize cues over the full data set instead of per training split.
    #[arg(long)]
    paper_parity: bool,
    /// Missing cue handling: drop|mean|constant(c) [default: mean]
    #[arg(long)]
    impute: Option<String>,
    /// Comma-separated subset of rf,gbt,fusion [default: all]
    #[arg(long)]
    classifiers: Option<String>,
    /// Pooled utterance embeddings (JSON lines with a dimension header).
    #[arg(long, value_name = "FILE")]
    embeddings: Option<String>,
    /// Add average dependency length to the cue features.
    #[arg(long)]
    include_adl: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of dialogues [default: 24]
    #[arg(long)]
    dialogues: Option<String>,
    /// Utterances per dialogue [default: 30]
    #[arg(long)]
    utterances: Option<String>,
    /// Cue and text signal strength for all channels [default: 0.5]
    #[arg(long)]
    signal: Option<String>,
    /// Text marker signal strength (overrides --signal).
    #[arg(long)]
    text_signal: Option<String>,
    /// Label-independent corpus: all signal strengths 0.
    #[arg(long)]
    null: bool,
}

type Overrides = Vec<(&'static str, String)>;

fn push(o: &mut Overrides, key: &'static str, v: Option<String>) {
    if let Some(v) = v {
        o.push((key, v));
    }
}

impl Common {
    fn collect(self, o: &mut Overrides) -> Option<PathBuf> {
        push(o, "out", self.out);
        push(o, "seed", self.seed);
        self.config
    }
}

impl CorpusArgs {
    fn collect(self, o: &mut Overrides) {
        push(o, "transcripts", self.transcripts);
        push(o, "gaze", self.gaze);
        push(o, "annotations", self.annotations);
        push(o, "lambda", self.lambda);
        push(o, "ngram-order", self.ngram_order);
        push(o, "gaze-order", self.gaze_order);
        push(o, "smoothing-k", self.smoothing_k);
        push(o, "text-scope", self.text_scope);
        push(o, "logprobs", self.logprobs);
        push(o, "gaze-logprobs", self.gaze_logprobs);
    }
}

impl ClassifyArgs {
    fn collect(self, o: &mut Overrides) {
        push(o, "split-ratio", self.split_ratio);
        push(o, "folds", self.folds);
        if self.paper_parity {
            o.push(("paper-parity", "true".into()));
        }
        push(o, "impute", self.impute);
        push(o, "classifiers", self.classifiers);
        push(o, "embeddings", self.embeddings);
        if self.include_adl {
            o.push(("include-adl", "true".into()));
        }
    }
}

impl SynthArgs {
    fn collect(self, o: &mut Overrides) {
        push(o, "dialogues", self.dialogues);
        push(o, "utterances", self.utterances);
        if self.null {
            o.push(("signal", "0".into()));
        } else {
            push(o, "signal", self.signal);
        }
        push(o, "text-signal", self.text_signal);
    }
}

fn resolve(config: Option<PathBuf>, overrides: Overrides) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    if let Some(path) = config {
        let text = fs::read_to_string(&path).map_err(|e| Error::Io {
            context: format!("reading {}", path.display()),
            source: e,
        })?;
        cfg.apply_file(&text)?;
    }
    for (k, v) in overrides {
        cfg.set(k, &v)?;
    }
    cfg.finalize()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut o = Overrides::new();
    match cli.command {
        Command::Synth { common, synth } => {
            let file = common.collect(&mut o);
            synth.collect(&mut o);
            let cfg = resolve(file, o)?;
            let r = app::cmd_synth(&cfg)?;
            println!(
                "{} dialogues, {} utterances, {} annotations written to {}",
                r.dialogues,
                r.utterances,
                r.annotations,
                cfg.out.display()
            );
        }
        Command::Quantify { common, corpus } => {
            let file = common.collect(&mut o);
            corpus.collect(&mut o);
            let cfg = resolve(file, o)?;
            print!("{}", app::cmd_quantify(&cfg)?);
        }
        Command::Analyze { common, corpus } => {
            let file = common.collect(&mut o);
            corpus.collect(&mut o);
            let cfg = resolve(file, o)?;
            let r = app::cmd_analyze(&cfg)?;
            for c in &r.cues {
                match &c.kruskal {
                    Some(kw) => println!(
                        "{}: H={:.4} p={:.3e} eta2={:.4} significant pairs: {}",
                        c.cue,
                        kw.h,
                        kw.p,
                        kw.eta_squared,
                        c.significant_pairs.len()
                    ),
                    None => println!(
                        "{}: skipped ({})",
                        c.cue,
                        c.skipped.as_deref().unwrap_or("")
                    ),
                }
            }
        }
        Command::Classify {
            common,
            corpus,
            classify,
        } => {
            let file = common.collect(&mut o);
            corpus.collect(&mut o);
            classify.collect(&mut o);
            let cfg = resolve(file, o)?;
            let r = app::cmd_classify(&cfg)?;
            print!("{}", app::scores_csv(&r));
        }
        Command::Report { common } => {
            let file = common.collect(&mut o);
            let cfg = resolve(file, o)?;
            let parts = app::cmd_report(&cfg)?;
            println!("report.json merged from: {}", parts.join(", "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}
