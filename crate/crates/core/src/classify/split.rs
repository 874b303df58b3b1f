//! Stratified hold-out splits and k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{evaluate_n, CvSummary};
use crate::error::{Error, Result};

fn by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = super::class_count(labels);
    let mut groups = vec![Vec::new(); k];
    for (i, &c) in labels.iter().enumerate() {
        groups[c].push(i);
    }
    groups
}

/// Splits indices so each class keeps its share of the training set. The
/// training size is `round(ratio * n)`, distributed over classes by largest
/// remainder (ties to the smaller class index). Indices come back sorted.
pub fn stratified_split(
    labels: &[usize],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split ratio {ratio} must lie strictly between 0 and 1"
        )));
    }
    let groups = by_class(labels);
    if let Some((c, g)) = groups
        .iter()
        .enumerate()
        .find(|(_, g)| !g.is_empty() && g.len() < 2)
    {
        return Err(Error::Degenerate(format!(
            "class {c} has {} record(s); at least 2 are needed to split",
            g.len()
        )));
    }
    let n = labels.len();
    let target = (ratio * n as f64).round() as usize;
    let mut quota: Vec<usize> = groups
        .iter()
        .map(|g| (ratio * g.len() as f64).floor() as usize)
        .collect();
    let mut order: Vec<usize> = (0..groups.len())
        .filter(|&c| !groups[c].is_empty())
        .collect();
    order.sort_by(|&a, &b| {
        let ra = ratio * groups[a].len() as f64 - quota[a] as f64;
        let rb = ratio * groups[b].len() as f64 - quota[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = quota.iter().sum();
    for &c in order.iter().cycle().take(order.len() * 2) {
        if assigned >= target {
            break;
        }
        if quota[c] < groups[c].len() - 1 {
            quota[c] += 1;
            assigned += 1;
        }
    }
    for (c, g) in groups.iter().enumerate() {
        if !g.is_empty() {
            quota[c] = quota[c].clamp(1, g.len() - 1);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, g) in groups.iter().enumerate() {
        let mut g = g.clone();
        g.shuffle(&mut rng);
        train.extend_from_slice(&g[..quota[c]]);
        test.extend_from_slice(&g[quota[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// `k` disjoint validation folds covering every index once, each class
/// dealt round-robin after a seeded shuffle.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let groups = by_class(labels);
    if let Some((c, g)) = groups
        .iter()
        .enumerate()
        .find(|(_, g)| !g.is_empty() && g.len() < k)
    {
        return Err(Error::Degenerate(format!(
            "class {c} has {} record(s), fewer than {k} folds",
            g.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for g in &groups {
        let mut g = g.clone();
        g.shuffle(&mut rng);
        for i in g {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Runs `fit_predict(train, validation)` on every fold and summarizes
/// accuracy and macro-F1. Folds are evaluated in order.
pub fn kfold_cv<F>(
    labels: &[usize],
    k: usize,
    seed: u64,
    n_classes: usize,
    mut fit_predict: F,
) -> Result<CvSummary>
where
    F: FnMut(&[usize], &[usize]) -> Result<Vec<usize>>,
{
    let folds = stratified_folds(labels, k, seed)?;
    let mut accuracy = Vec::with_capacity(k);
    let mut macro_f1 = Vec::with_capacity(k);
    for (i, val) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let mut train = train;
        train.sort_unstable();
        let pred = fit_predict(&train, val)?;
        let gold: Vec<usize> = val.iter().map(|&v| labels[v]).collect();
        let report = evaluate_n(&pred, &gold, n_classes)?;
        accuracy.push(report.accuracy);
        macro_f1.push(report.macro_f1);
    }
    Ok(CvSummary::from_folds(accuracy, macro_f1))
}
