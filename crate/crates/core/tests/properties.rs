use std::collections::BTreeSet;

use proptest::prelude::*;

use cueload::classify::metrics::evaluate_n;
use cueload::classify::tree::Node;
use cueload::classify::{
    stratified_folds, stratified_split, train_boosted, train_forest, train_fusion, BoostConfig,
    Classifier, ForestConfig, FusionConfig,
};
use cueload::corpus::{parse_conllu, write_conllu, Speaker, Token, Utterance};
use cueload::lm::{train_gaze_ngram, train_word_sequences};
use cueload::pipeline::minmax_normalize;
use cueload::stats::kruskal_wallis;
use cueload::{Cue, FeatureRecord, UnderstandingState};

fn record(i: usize, label: usize, raw: [Option<f64>; 4]) -> FeatureRecord {
    FeatureRecord {
        window_id: format!("d:u{i}"),
        dialogue_id: "d".into(),
        label: UnderstandingState::from_index(label).unwrap(),
        raw,
        normalized: [None; 4],
    }
}

/// Labels with `lo..hi` records per class, in shuffled order.
fn class_labels(lo: usize, hi: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(lo..hi, 4)
        .prop_map(|counts| {
            counts
                .iter()
                .enumerate()
                .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
                .collect::<Vec<usize>>()
        })
        .prop_shuffle()
}

fn labelled_rows() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (8usize..40, 1usize..4).prop_flat_map(|(n, f)| {
        (
            prop::collection::vec(prop::collection::vec(-50.0f64..50.0, f), n),
            prop::collection::vec(0usize..4, n),
        )
    })
}

proptest! {
    #[test]
    fn word_model_distributions_sum_to_one(
        seqs in prop::collection::vec(prop::collection::vec("[a-e]", 0..8), 1..6),
        order in 1usize..4,
        k in 0.01f64..2.0,
        ctx in prop::collection::vec("[a-g]", 0..4),
    ) {
        let m = train_word_sequences(&seqs, order, k).unwrap();
        let ctx: Vec<&str> = ctx.iter().map(String::as_str).collect();
        let total: f64 = m.distribution(&ctx).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaze_model_distributions_sum_to_one(
        seqs in prop::collection::vec(prop::collection::vec(1u8..=81, 1..30), 1..4),
        ctx in prop::collection::vec(1u8..=81, 0..3),
    ) {
        let m = train_gaze_ngram(&seqs, 3, 0.1).unwrap();
        prop_assert_eq!(m.event_count(), 83);
        let ctx: Vec<String> = ctx.iter().map(u8::to_string).collect();
        let ctx: Vec<&str> = ctx.iter().map(String::as_str).collect();
        let total: f64 = m.distribution(&ctx).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kruskal_is_rank_invariant_under_minmax(
        values in prop::collection::vec((0usize..4, -1e3f64..1e3), 8..60),
    ) {
        prop_assume!(BTreeSet::from_iter(values.iter().map(|v| v.0)).len() == 4);
        let mut records: Vec<FeatureRecord> = values
            .iter()
            .enumerate()
            .map(|(i, &(l, v))| record(i, l, [Some(v), None, None, None]))
            .collect();
        minmax_normalize(&mut records, None);
        let group = |f: &dyn Fn(&FeatureRecord) -> f64| -> Vec<Vec<f64>> {
            (0..4)
                .map(|g| records.iter().filter(|r| r.label.index() == g).map(f).collect())
                .collect()
        };
        let raw = kruskal_wallis("x", &group(&|r| r.raw(Cue::InfoValue).unwrap()));
        let norm = kruskal_wallis("x", &group(&|r| r.normalized(Cue::InfoValue).unwrap()));
        match (raw, norm) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.h, b.h),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn minmax_stays_in_unit_interval(
        values in prop::collection::vec(prop::option::of(-1e6f64..1e6), 1..50),
        test_value in -2e6f64..2e6,
    ) {
        let mut records: Vec<FeatureRecord> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| record(i, i % 4, [v, None, v.map(|x| x * 2.0), None]))
            .collect();
        let scaler = minmax_normalize(&mut records, None);
        for r in &records {
            for cue in Cue::ALL {
                match r.normalized(cue) {
                    Some(x) => prop_assert!((0.0..=1.0).contains(&x)),
                    None => prop_assert!(r.is_missing(cue)),
                }
            }
        }
        if let Some(x) = scaler.scale(Cue::InfoValue, test_value) {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn macro_f1_invariant_under_relabeling(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let gold: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let a = evaluate_n(&pred, &gold, 4).unwrap();
        let gold2: Vec<usize> = gold.iter().map(|&g| perm[g]).collect();
        let pred2: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
        let b = evaluate_n(&pred2, &gold2, 4).unwrap();
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        prop_assert_eq!(a.accuracy, b.accuracy);
    }

    #[test]
    fn folds_partition_the_indices(
        labels in class_labels(10, 50),
        k in 2usize..=10,
        seed in any::<u64>(),
    ) {
        let folds = stratified_folds(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for c in 0..4 {
            let counts: Vec<usize> = folds
                .iter()
                .map(|f| f.iter().filter(|&&i| labels[i] == c).count())
                .collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn split_keeps_class_proportions(
        labels in class_labels(10, 80),
        ratio in 0.1f64..0.9,
        seed in any::<u64>(),
    ) {
        let (train, test) = stratified_split(&labels, ratio, seed).unwrap();
        let n = labels.len();
        prop_assert_eq!(train.len(), (ratio * n as f64).round() as usize);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        for c in 0..4 {
            let nc = labels.iter().filter(|&&l| l == c).count() as f64;
            let tc = train.iter().filter(|&&i| labels[i] == c).count() as f64;
            prop_assert!((tc - nc * train.len() as f64 / n as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn small_classes_are_rejected(k in 3usize..10, seed in any::<u64>()) {
        let labels = [vec![0; k - 1], vec![1; 20]].concat();
        prop_assert!(stratified_folds(&labels, k, seed).is_err());
        prop_assert!(stratified_split(&[0, 1, 1, 1], 0.5, seed).is_err());
    }

    #[test]
    fn conllu_round_trip(
        trees in prop::collection::vec(prop::collection::vec(0usize..100, 1..8), 1..5),
        words in prop::collection::vec("[A-Za-z]{1,6}", 8),
    ) {
        let mut utts = Vec::new();
        for (u, parents) in trees.iter().enumerate() {
            // Token i attaches to an earlier token or to the root; token 1 is the root.
            let tokens = parents
                .iter()
                .enumerate()
                .map(|(i, p)| Token {
                    position: i + 1,
                    surface: words[i].clone(),
                    head: Some(if i == 0 { 0 } else { 1 + p % i }),
                    deprel: "dep".into(),
                    start_time: None,
                    end_time: None,
                })
                .collect();
            utts.push(Utterance {
                id: format!("u{u}"),
                dialogue_id: "d".into(),
                speaker: if u % 2 == 0 { Speaker::Explainer } else { Speaker::Explainee },
                tokens,
                start_time: u as f64 * 2.0,
                end_time: u as f64 * 2.0 + 1.5,
            });
        }
        let text = write_conllu(&utts);
        let back = parse_conllu(text.as_bytes()).unwrap();
        prop_assert_eq!(&back.utterances, &utts);
        prop_assert_eq!(write_conllu(&back.utterances), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tree_thresholds_lie_in_training_range((x, y) in labelled_rows(), seed in any::<u64>()) {
        let forest = train_forest(&x, &y, &ForestConfig { n_trees: 5, seed, n_classes: Some(4), ..Default::default() }).unwrap();
        let boosted = train_boosted(&x, &y, &BoostConfig { n_rounds: 3, seed, n_classes: Some(4), ..Default::default() }).unwrap();
        let range = |f: usize| {
            let col = x.iter().map(|r| r[f]);
            (col.clone().fold(f64::INFINITY, f64::min), col.fold(f64::NEG_INFINITY, f64::max))
        };
        let check = |feature: usize, threshold: f64| {
            let (lo, hi) = range(feature);
            assert!(threshold >= lo && threshold <= hi, "{threshold} outside [{lo}, {hi}]");
        };
        for t in &forest.trees {
            for n in &t.nodes {
                if let Node::Split { feature, threshold, .. } = n {
                    check(*feature, *threshold);
                }
            }
        }
        for t in boosted.rounds.iter().flatten() {
            for n in &t.nodes {
                if let Node::Split { feature, threshold, .. } = n {
                    check(*feature, *threshold);
                }
            }
        }
    }

    #[test]
    fn probabilities_lie_on_the_simplex((x, y) in labelled_rows(), probe in prop::collection::vec(-100.0f64..100.0, 3)) {
        let f = x[0].len();
        let fusion = train_fusion(&x, &y, &FusionConfig { max_epochs: 50, n_classes: Some(4), ..Default::default() }).unwrap();
        let forest = train_forest(&x, &y, &ForestConfig { n_trees: 5, n_classes: Some(4), ..Default::default() }).unwrap();
        let boosted = train_boosted(&x, &y, &BoostConfig { n_rounds: 3, n_classes: Some(4), ..Default::default() }).unwrap();
        let models: [&dyn Classifier; 3] = [&fusion, &forest, &boosted];
        for m in models {
            let p = m.predict_proba(&probe[..f]);
            prop_assert_eq!(p.len(), 4);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn fusion_simplex_over_random_inputs() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let x: Vec<Vec<f64>> = (0..80)
        .map(|_| (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    let y: Vec<usize> = (0..80).map(|i| i % 4).collect();
    let model = train_fusion(&x, &y, &FusionConfig::default()).unwrap();
    for _ in 0..1000 {
        let probe: Vec<f64> = (0..5).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let p = model.predict_proba(&probe);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{p:?}");
    }
}
