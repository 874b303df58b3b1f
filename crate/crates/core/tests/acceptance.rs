//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

use common::*;
use cueload::app::{self, RunConfig};
use cueload::classify::{ClassifierKind, FeatureSet};
use cueload::corpus::parse_conllu;
use cueload::lm::{train_gaze_ngram, train_word_ngram, NGramModel};
use cueload::pipeline::minmax_normalize;
use cueload::stats::{dunn_posthoc, kruskal_wallis};
use cueload::syntax::{self, TreeStats};
use cueload::synth::{generate_corpus, GeneratorConfig, SignalStrengths};
use cueload::{Cue, FeatureRecord, UnderstandingState};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn synth_corpus(cfg: &GeneratorConfig) -> app::CorpusData {
    let s = generate_corpus(cfg).unwrap();
    app::corpus_from_sources(
        s.conllu.as_bytes(),
        Some(s.gaze_csv.as_bytes()),
        s.annotations_csv.as_bytes(),
    )
    .unwrap()
}

fn formula_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut fixtures = 0;
    let mut worst: f64 = 0.0;
    let mut err = |a: f64, b: f64| worst = worst.max((a - b).abs());

    let text = read_fixture("trees.conllu");
    let parsed = parse_conllu(text.as_bytes()).unwrap();
    let expected: Vec<Vec<String>> = read_fixture("trees_expected.csv")
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    for ((utt, raw), exp) in parsed
        .utterances
        .iter()
        .zip(raw_sentences(&text))
        .zip(&expected)
    {
        let heads: Vec<usize> = raw.heads.iter().map(|h| h.unwrap()).collect();
        let brute = brute_tree(&heads);
        let stats = syntax::tree_stats(utt).unwrap();
        err(
            syntax::syntactic_complexity(&stats, 0.5).unwrap(),
            fraction(&exp[4]),
        );
        for lambda in [0.0, 0.3, 0.7, 1.0] {
            err(
                syntax::syntactic_complexity(&stats, lambda).unwrap(),
                sc_formula(
                    brute.length as f64,
                    brute.heads as f64,
                    brute.depth as f64,
                    lambda,
                ),
            );
        }
        if !exp[5].is_empty() {
            let adl = syntax::average_dependency_length(&stats).unwrap();
            err(adl, fraction(&exp[5]));
            err(adl, brute.arc_sum as f64 / brute.arcs as f64);
        }
        fixtures += 1;
    }

    let corpus = app::corpus_from_sources(
        read_fixture("toy/transcripts.conllu").as_bytes(),
        Some(read_fixture("toy/gaze.csv").as_bytes()),
        read_fixture("toy/annotations.csv").as_bytes(),
    )
    .unwrap();
    let q = app::quantify(&RunConfig::default(), &corpus).unwrap();
    for (id, want) in toy_window_oracle() {
        let r = q.records.iter().find(|r| r.window_id == id).unwrap();
        for (cue, w) in Cue::ALL.into_iter().zip(want) {
            err(r.raw(cue).unwrap(), w);
        }
        fixtures += 1;
    }

    let s = TreeStats {
        length: 10,
        heads: 4,
        depth: 3,
        arcs: vec![(2, 1), (2, 3)],
    };
    err(syntax::syntactic_complexity(&s, 0.5).unwrap(), 2.75);
    err(syntax::average_dependency_length(&s).unwrap(), 1.0);
    // Unseen context: the smoothed model is uniform, so its entropy is ln V.
    let m = cueload::lm::train_word_sequences(&[vec!["a", "b"]], 2, 0.1).unwrap();
    let h: f64 = m.distribution(&["zzz"]).iter().map(|p| -p * p.ln()).sum();
    err(h, (m.event_count() as f64).ln());
    fixtures += 3;

    let elapsed = t0.elapsed();
    outcome(
        worst <= 1e-12 && fixtures >= 10 && elapsed < Duration::from_secs(1),
        format!(
            "{fixtures} fixtures, max abs error {worst:.1e}, {}",
            secs(elapsed)
        ),
    )
}

fn random_groups(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..4)
        .map(|_| {
            let n = rng.gen_range(3..25);
            // One decimal place so that ties occur.
            (0..n)
                .map(|_| (rng.gen_range(0.0..10.0f64) * 10.0).round() / 10.0)
                .collect()
        })
        .collect()
}

fn kruskal_wallis_reference() -> Outcome {
    let t0 = Instant::now();
    let ex = kruskal_wallis(
        "x",
        &[
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ],
    )
    .unwrap();
    let exact = ex.h == 7.2 && ex.df == 2 && (ex.eta_squared - 5.2 / 6.0).abs() < 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut dh, mut dp) = (0.0f64, 0.0f64);
    let mut eta_ok = true;
    let mut negative = 0;
    for _ in 0..200 {
        let g = random_groups(&mut rng);
        let r = kruskal_wallis("x", &g).unwrap();
        let (h, p) = kw_reference(&g);
        dh = dh.max((r.h - h).abs());
        dp = dp.max((r.p - p).abs());
        if r.h < 3.0 {
            negative += 1;
            eta_ok &= r.eta_squared < 0.0;
        }
    }
    let elapsed = t0.elapsed();
    outcome(
        exact && dh <= 1e-9 && dp <= 1e-9 && eta_ok && negative > 0 && elapsed < Duration::from_secs(10),
        format!(
            "H(example)={}, 200 datasets: max |dH| {dh:.1e}, max |dp| {dp:.1e}, eta2<0 in all {negative} cases with H<k-1, {}",
            ex.h,
            secs(elapsed)
        ),
    )
}

fn record(i: usize, label: usize, raw: [Option<f64>; 4]) -> FeatureRecord {
    FeatureRecord {
        window_id: format!("d:u{i}"),
        dialogue_id: "d".into(),
        label: UnderstandingState::from_index(label).unwrap(),
        raw,
        normalized: [None; 4],
    }
}

fn rank_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut compared = 0;
    for t in 0..50 {
        let n = rng.gen_range(20..120);
        let mut records: Vec<FeatureRecord> = (0..n)
            .map(|i| {
                let scale = 10f64.powi(rng.gen_range(-3..4));
                let raw = [(); 4].map(|_| Some(rng.gen_range(-1.0..1.0) * scale + t as f64));
                record(i, i % 4, raw)
            })
            .collect();
        minmax_normalize(&mut records, None);
        for cue in Cue::ALL {
            let group = |f: &dyn Fn(&FeatureRecord) -> f64| -> Vec<Vec<f64>> {
                (0..4)
                    .map(|g| {
                        records
                            .iter()
                            .filter(|r| r.label.index() == g)
                            .map(f)
                            .collect()
                    })
                    .collect()
            };
            let a = kruskal_wallis("x", &group(&|r| r.raw(cue).unwrap())).unwrap();
            let b = kruskal_wallis("x", &group(&|r| r.normalized(cue).unwrap())).unwrap();
            if a.h != b.h {
                return outcome(false, format!("table {t} cue {cue}: {} vs {}", a.h, b.h));
            }
            compared += 1;
        }
    }
    outcome(
        true,
        format!("50 tables, {compared} cue columns, H bitwise identical"),
    )
}

fn dunn_bonferroni() -> Outcome {
    let names = ["U", "PU", "NU", "MU"];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut pairs = 0;
    for _ in 0..100 {
        let g = random_groups(&mut rng);
        for d in dunn_posthoc("x", &names, &g).unwrap() {
            if d.p_adj != (6.0 * d.p_raw).min(1.0) {
                return outcome(false, format!("p_adj {} for p_raw {}", d.p_adj, d.p_raw));
            }
            pairs += 1;
        }
    }
    let same = vec![vec![1.0, 2.0, 3.0, 5.0]; 4];
    let d = dunn_posthoc("x", &names, &same).unwrap();
    let identical = d.len() == 6 && d.iter().all(|r| r.z == 0.0 && r.p_adj == 1.0);
    outcome(
        identical,
        format!(
            "{pairs} pairs with p_adj = min(1, 6 p_raw) exactly; identical groups: z=0, p_adj=1"
        ),
    )
}

fn sample_contexts(model: &NGramModel, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<String>> {
    let observed = model.observed_contexts();
    let events: Vec<String> = model.events().map(str::to_string).collect();
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                observed[rng.gen_range(0..observed.len())].clone()
            } else {
                let len = rng.gen_range(0..model.order());
                (0..len)
                    .map(|_| events[rng.gen_range(0..events.len())].clone())
                    .collect()
            }
        })
        .collect()
}

fn lm_normalization() -> Outcome {
    let corpus = synth_corpus(&GeneratorConfig::default());
    let word = train_word_ngram(corpus.utterances.iter().map(|u| u.as_ref()), 3, 0.1).unwrap();
    let seqs: Vec<Vec<u8>> = corpus
        .gaze
        .as_ref()
        .unwrap()
        .values()
        .map(|s| s.iter().map(|g| g.label).collect())
        .collect();
    let gaze = train_gaze_ngram(&seqs, 3, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for model in [&word, &gaze] {
        for ctx in sample_contexts(model, &mut rng, 1000) {
            let ctx: Vec<&str> = ctx.iter().map(String::as_str).collect();
            let total: f64 = model.distribution(&ctx).iter().sum();
            worst = worst.max((total - 1.0).abs());
            n += 1;
        }
    }
    outcome(
        worst <= 1e-9,
        format!(
            "{n} contexts (word V={}, gaze V={}), max |sum - 1| {worst:.1e}",
            word.event_count(),
            gaze.event_count()
        ),
    )
}

fn run_classification(
    signal: SignalStrengths,
    seed: u64,
    kinds: &[ClassifierKind],
) -> app::ClassificationResult {
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    cfg.synth.seed = seed;
    cfg.synth.signal = signal;
    cfg.classify.seed = seed;
    cfg.classify.classifiers = kinds.to_vec();
    let corpus = synth_corpus(&cfg.synth);
    app::classify(&cfg, &corpus).unwrap()
}

fn chance_baseline() -> Outcome {
    let t0 = Instant::now();
    let r = run_classification(SignalStrengths::uniform(0.5), 42, &ClassifierKind::ALL);
    let mut worst = f64::INFINITY;
    let mut fusion_f1 = 0.0;
    for run in &r.runs {
        worst = worst.min(run.holdout.accuracy).min(run.cv.accuracy_mean);
        if run.classifier == ClassifierKind::Fusion && run.features == FeatureSet::TextAndCues {
            fusion_f1 = run.cv.macro_f1_mean;
        }
    }
    let elapsed = t0.elapsed();
    outcome(
        r.runs.len() == 6 && worst > 0.25 && fusion_f1 >= 0.60 && elapsed < Duration::from_secs(60),
        format!(
            "6 cells, lowest accuracy {worst:.3}, fusion text+cues CV macro-F1 {fusion_f1:.3}, {}",
            secs(elapsed)
        ),
    )
}

fn cue_additivity() -> Outcome {
    let mut wins = 0;
    let mut cells = Vec::new();
    for seed in [1, 2, 3, 4, 5] {
        let r = run_classification(
            SignalStrengths::uniform(0.5),
            seed,
            &[ClassifierKind::Fusion],
        );
        let f1 = |fs: FeatureSet| {
            r.runs
                .iter()
                .find(|x| x.features == fs)
                .unwrap()
                .cv
                .macro_f1_mean
        };
        let (text, both) = (f1(FeatureSet::TextOnly), f1(FeatureSet::TextAndCues));
        if both > text {
            wins += 1;
        }
        cells.push(format!("{text:.3}->{both:.3}"));
    }
    outcome(
        wins >= 4,
        format!(
            "fusion CV macro-F1 text -> text+cues: {} ({wins}/5 higher)",
            cells.join(", ")
        ),
    )
}

fn null_calibration() -> Outcome {
    let t0 = Instant::now();
    let mut hits = [0usize; 4];
    let seeds = 200;
    for seed in 0..seeds {
        let cfg = GeneratorConfig {
            signal: SignalStrengths::none(),
            seed,
            ..Default::default()
        };
        let corpus = synth_corpus(&cfg);
        let q = app::quantify(&RunConfig::default(), &corpus).unwrap();
        let a = app::analyze(&q.records);
        for (i, c) in a.cues.iter().enumerate() {
            if c.kruskal.as_ref().is_some_and(|k| k.p < 0.05) {
                hits[i] += 1;
            }
        }
    }
    let rates = hits.map(|h| h as f64 / seeds as f64);
    let elapsed = t0.elapsed();
    let detail: Vec<String> = Cue::ALL
        .iter()
        .zip(rates)
        .map(|(c, r)| format!("{c} {r:.3}"))
        .collect();
    outcome(
        rates.iter().all(|r| (r - 0.05).abs() <= 0.03) && elapsed < Duration::from_secs(300),
        format!(
            "false-positive rate over {seeds} seeds: {}, {}",
            detail.join(", "),
            secs(elapsed)
        ),
    )
}

fn golden_end_to_end() -> Outcome {
    let dir = tempdir().unwrap();
    golden_pipeline(dir.path());
    let toy = tempdir().unwrap();
    stage_toy(toy.path());
    cueload_ok(
        toy.path(),
        &[&["quantify", "--out", "out"], &CORPUS_ARGS[..]].concat(),
    );
    match check_golden(dir.path(), "e2e").and(check_golden(&toy.path().join("out"), "toy")) {
        Ok(()) => outcome(
            true,
            format!(
                "{} pipeline files and toy features byte-identical",
                dir_files(dir.path()).len()
            ),
        ),
        Err(e) => outcome(false, e),
    }
}

fn determinism() -> Outcome {
    let a = tempdir().unwrap();
    let b = tempdir().unwrap();
    golden_pipeline(a.path());
    golden_pipeline(b.path());
    let (fa, fb) = (dir_files(a.path()), dir_files(b.path()));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    outcome(
        differing.is_empty() && fa.len() == fb.len(),
        format!("synth, quantify, analyze, classify, report rerun: {} files identical, differing {differing:?}", fa.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("formula oracles", formula_oracles),
        ("kruskal-wallis", kruskal_wallis_reference),
        ("rank invariance", rank_invariance),
        ("dunn/bonferroni", dunn_bonferroni),
        ("lm normalization", lm_normalization),
        ("chance baseline", chance_baseline),
        ("cue additivity", cue_additivity),
        ("null calibration", null_calibration),
        ("golden end-to-end", golden_end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout();
    for (name, f) in criteria {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        let _ = writeln!(
            out,
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let _ = writeln!(
        out,
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
