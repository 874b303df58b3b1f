//! Histogram-binned CART growth shared by the forest (Gini) and the boosted
//! model (second-order regression).

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_BINS: usize = 64;

/// Features quantized into at most `max_bins` bins each. Split thresholds sit
/// halfway between the largest value of one bin and the smallest of the
/// next, so every threshold lies inside the feature's training range.
pub struct Binned {
    /// `bins[f][row]`
    bins: Vec<Vec<u16>>,
    /// `thresholds[f][b]` separates bin `b` from bin `b + 1`.
    thresholds: Vec<Vec<f64>>,
    rows: usize,
}

impl Binned {
    pub fn new(x: &[Vec<f64>], max_bins: usize) -> Self {
        let rows = x.len();
        let features = x.first().map_or(0, Vec::len);
        let mut bins = Vec::with_capacity(features);
        let mut thresholds = Vec::with_capacity(features);
        for f in 0..features {
            let mut distinct: Vec<f64> = x.iter().map(|r| r[f]).collect();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let mut cuts = Vec::new();
            if distinct.len() <= max_bins {
                for w in distinct.windows(2) {
                    cuts.push(midpoint(w[0], w[1]));
                }
            } else {
                let mut last = 0;
                for b in 1..max_bins {
                    let idx = b * distinct.len() / max_bins;
                    if idx > last {
                        cuts.push(midpoint(distinct[idx - 1], distinct[idx]));
                        last = idx;
                    }
                }
            }
            let col: Vec<u16> = x
                .iter()
                .map(|r| cuts.partition_point(|t| *t < r[f]) as u16)
                .collect();
            bins.push(col);
            thresholds.push(cuts);
        }
        Binned {
            bins,
            thresholds,
            rows,
        }
    }

    pub fn features(&self) -> usize {
        self.bins.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<L> {
    Leaf(L),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    pub nodes: Vec<Node<L>>,
}

impl<L> Tree<L> {
    pub fn leaf(&self, x: &[f64]) -> &L {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(l) => return l,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go<L>(t: &Tree<L>, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

/// Split statistics accumulated per sample into a fixed-width vector.
pub trait Criterion {
    type Leaf;
    fn width(&self) -> usize;
    fn accumulate(&self, acc: &mut [f64], row: usize);
    /// Sample count carried by an accumulator (for `min_leaf`).
    fn count(&self, acc: &[f64]) -> f64;
    /// Larger is better; a split's gain is `score(l) + score(r) - score(parent)`.
    fn score(&self, acc: &[f64]) -> f64;
    fn leaf(&self, acc: &[f64]) -> Self::Leaf;
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; all when `None`.
    pub max_features: Option<usize>,
}

/// Grows one tree on `rows` (duplicates allowed, as in a bootstrap sample).
pub fn grow<C: Criterion, R: Rng>(
    data: &Binned,
    rows: Vec<usize>,
    crit: &C,
    params: GrowParams,
    rng: &mut R,
) -> Tree<C::Leaf> {
    let width = crit.width();
    let n_features = data.features();
    let mut nodes: Vec<Option<Node<C::Leaf>>> = vec![None];
    let mut stack = vec![(0usize, rows, 0usize)];

    while let Some((slot, rows, depth)) = stack.pop() {
        let mut total = vec![0.0; width];
        for &r in &rows {
            crit.accumulate(&mut total, r);
        }
        let min_leaf = params.min_leaf.max(1) as f64;
        let can_split =
            depth < params.max_depth && crit.count(&total) >= 2.0 * min_leaf && n_features > 0;

        let best = if can_split {
            let candidates: Vec<usize> = match params.max_features {
                Some(m) if m < n_features => {
                    let mut v = index::sample(rng, n_features, m.max(1)).into_vec();
                    v.sort_unstable();
                    v
                }
                _ => (0..n_features).collect(),
            };
            best_split(data, &rows, &candidates, &total, crit, min_leaf)
        } else {
            None
        };

        match best {
            Some((feature, bin)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| data.bins[feature][r] as usize <= bin);
                let left = nodes.len();
                nodes.push(None);
                nodes.push(None);
                nodes[slot] = Some(Node::Split {
                    feature,
                    threshold: data.thresholds[feature][bin],
                    left,
                    right: left + 1,
                });
                stack.push((left + 1, right_rows, depth + 1));
                stack.push((left, left_rows, depth + 1));
            }
            None => nodes[slot] = Some(Node::Leaf(crit.leaf(&total))),
        }
    }
    Tree {
        nodes: nodes
            .into_iter()
            .map(|n| n.expect("every slot filled"))
            .collect(),
    }
}

const MIN_GAIN: f64 = 1e-12;

fn best_split<C: Criterion>(
    data: &Binned,
    rows: &[usize],
    candidates: &[usize],
    total: &[f64],
    crit: &C,
    min_leaf: f64,
) -> Option<(usize, usize)> {
    let width = crit.width();
    let parent = crit.score(total);
    let mut best: Option<(f64, usize, usize)> = None;
    let mut left = vec![0.0; width];
    let mut right = vec![0.0; width];

    for &f in candidates {
        let n_bins = data.thresholds[f].len() + 1;
        if n_bins < 2 {
            continue;
        }
        let mut hist = vec![0.0; n_bins * width];
        for &r in rows {
            let b = data.bins[f][r] as usize;
            crit.accumulate(&mut hist[b * width..(b + 1) * width], r);
        }
        left.iter_mut().for_each(|v| *v = 0.0);
        for b in 0..n_bins - 1 {
            for j in 0..width {
                left[j] += hist[b * width + j];
                right[j] = total[j] - left[j];
            }
            if crit.count(&left) < min_leaf || crit.count(&right) < min_leaf {
                continue;
            }
            let gain = crit.score(&left) + crit.score(&right) - parent;
            if gain > MIN_GAIN && best.is_none_or(|(g, _, _)| gain > g + MIN_GAIN) {
                best = Some((gain, f, b));
            }
        }
    }
    best.map(|(_, f, b)| (f, b))
}

/// Gini impurity over class labels; leaves hold class distributions.
pub struct Gini<'a> {
    pub labels: &'a [usize],
    pub n_classes: usize,
}

impl Criterion for Gini<'_> {
    type Leaf = Vec<f64>;

    fn width(&self) -> usize {
        self.n_classes
    }

    fn accumulate(&self, acc: &mut [f64], row: usize) {
        acc[self.labels[row]] += 1.0;
    }

    fn count(&self, acc: &[f64]) -> f64 {
        acc.iter().sum()
    }

    // n * gini = n - sum(c^2) / n; the n terms cancel across a split.
    fn score(&self, acc: &[f64]) -> f64 {
        let n: f64 = acc.iter().sum();
        if n == 0.0 {
            0.0
        } else {
            acc.iter().map(|c| c * c).sum::<f64>() / n
        }
    }

    fn leaf(&self, acc: &[f64]) -> Vec<f64> {
        let n: f64 = acc.iter().sum();
        acc.iter().map(|c| c / n).collect()
    }
}

/// Newton-step regression on gradients/hessians with L2 leaf penalty.
pub struct SecondOrder<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub l2: f64,
}

impl Criterion for SecondOrder<'_> {
    type Leaf = f64;

    fn width(&self) -> usize {
        3
    }

    fn accumulate(&self, acc: &mut [f64], row: usize) {
        acc[0] += self.grad[row];
        acc[1] += self.hess[row];
        acc[2] += 1.0;
    }

    fn count(&self, acc: &[f64]) -> f64 {
        acc[2]
    }

    fn score(&self, acc: &[f64]) -> f64 {
        acc[0] * acc[0] / (acc[1] + self.l2)
    }

    fn leaf(&self, acc: &[f64]) -> f64 {
        -acc[0] / (acc[1] + self.l2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn thresholds_in_range<L>(t: &Tree<L>, x: &[Vec<f64>]) -> bool {
        t.nodes.iter().all(|n| match n {
            Node::Leaf(_) => true,
            Node::Split {
                feature, threshold, ..
            } => {
                let lo = x.iter().map(|r| r[*feature]).fold(f64::INFINITY, f64::min);
                let hi = x
                    .iter()
                    .map(|r| r[*feature])
                    .fold(f64::NEG_INFINITY, f64::max);
                *threshold >= lo && *threshold <= hi
            }
        })
    }

    #[test]
    fn gini_tree_separates() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 7)).collect();
        let data = Binned::new(&x, DEFAULT_MAX_BINS);
        let crit = Gini {
            labels: &y,
            n_classes: 2,
        };
        let params = GrowParams {
            max_depth: 4,
            min_leaf: 1,
            max_features: None,
        };
        let t = grow(
            &data,
            (0..20).collect(),
            &crit,
            params,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        for (r, &c) in x.iter().zip(&y) {
            let dist = t.leaf(r);
            assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(super::super::argmax(dist), c);
        }
        assert!(thresholds_in_range(&t, &x));
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn binning_caps_bins() {
        let x: Vec<Vec<f64>> = (0..1000).map(|i| vec![(i as f64).sqrt()]).collect();
        let b = Binned::new(&x, 16);
        assert!(b.thresholds[0].len() < 16);
        assert_eq!(b.rows(), 1000);
        let max_bin = *b.bins[0].iter().max().unwrap() as usize;
        assert_eq!(max_bin, b.thresholds[0].len());
    }

    #[test]
    fn constant_feature_never_splits() {
        let x = vec![vec![1.0]; 10];
        let y: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let data = Binned::new(&x, 8);
        let crit = Gini {
            labels: &y,
            n_classes: 2,
        };
        let params = GrowParams {
            max_depth: 5,
            min_leaf: 1,
            max_features: None,
        };
        let t = grow(
            &data,
            (0..10).collect(),
            &crit,
            params,
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert_eq!(t.nodes.len(), 1);
    }
}
