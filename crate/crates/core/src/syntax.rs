//! Syntactic complexity score and average dependency length.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Shape of one dependency tree (or a forest of them, after [`TreeStats::merge`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    /// Token count.
    pub length: usize,
    /// Distinct tokens that head at least one dependent; the virtual root
    /// does not count.
    pub heads: usize,
    /// Nodes on the longest root-to-leaf path; the root token has depth 1.
    pub depth: usize,
    /// `(head, dependent)` positions; the root attachment is excluded.
    pub arcs: Vec<(usize, usize)>,
}

impl TreeStats {
    /// Combines trees as a forest: lengths and head counts add, depth is the
    /// maximum, arcs are concatenated (positions stay utterance-local).
    pub fn merge<'a, I: IntoIterator<Item = &'a TreeStats>>(parts: I) -> TreeStats {
        let mut out = TreeStats {
            length: 0,
            heads: 0,
            depth: 0,
            arcs: Vec::new(),
        };
        for p in parts {
            out.length += p.length;
            out.heads += p.heads;
            out.depth = out.depth.max(p.depth);
            out.arcs.extend_from_slice(&p.arcs);
        }
        out
    }
}

pub fn tree_stats(utterance: &Utterance) -> Result<TreeStats> {
    if !utterance.is_parsed() {
        return Err(Error::Undefined(format!(
            "utterance {} has no dependency tree",
            utterance.id
        )));
    }
    let heads: Vec<usize> = utterance.tokens.iter().map(|t| t.head.unwrap()).collect();
    let n = heads.len();

    let mut is_head = vec![false; n + 1];
    let mut arcs = Vec::new();
    for (i, &h) in heads.iter().enumerate() {
        if h > 0 {
            is_head[h] = true;
            arcs.push((h, i + 1));
        }
    }

    // depth[pos] memoized walk to the root; trees are validated acyclic.
    let mut depth = vec![0usize; n + 1];
    for start in 1..=n {
        let mut path = Vec::new();
        let mut node = start;
        while node != 0 && depth[node] == 0 {
            path.push(node);
            node = heads[node - 1];
        }
        let mut d = if node == 0 { 0 } else { depth[node] };
        for &p in path.iter().rev() {
            d += 1;
            depth[p] = d;
        }
    }

    Ok(TreeStats {
        length: n,
        heads: is_head.iter().filter(|&&b| b).count(),
        depth: depth.into_iter().max().unwrap_or(0),
        arcs,
    })
}

/// `lambda * L / alpha + (1 - lambda) * beta`, or `(1 - lambda) * beta` when
/// the tree has no heads.
pub fn syntactic_complexity(stats: &TreeStats, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let beta = stats.depth as f64;
    if stats.heads > 0 {
        Ok(lambda * stats.length as f64 / stats.heads as f64 + (1.0 - lambda) * beta)
    } else {
        Ok((1.0 - lambda) * beta)
    }
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "lambda {lambda} outside [0, 1]"
        )))
    }
}

/// Mean `|h - d|` over the non-root arcs.
pub fn average_dependency_length(stats: &TreeStats) -> Result<f64> {
    if stats.arcs.is_empty() {
        return Err(Error::Undefined(
            "average dependency length needs at least one non-root arc".into(),
        ));
    }
    let total: usize = stats.arcs.iter().map(|&(h, d)| h.abs_diff(d)).sum();
    Ok(total as f64 / stats.arcs.len() as f64)
}

/// Outcome of [`window_syntax_metrics`]. ADL can be undefined on its own
/// (a forest of single tokens has no arcs).
#[derive(Debug)]
pub struct SyntaxMetrics {
    pub sc: f64,
    pub adl: Result<f64>,
    pub skipped: usize,
}

/// Syntax metrics over a group of utterances treated as a forest. Unparsed
/// or empty utterances are skipped with a warning; if none remain the call
/// fails.
pub fn window_syntax_metrics<'a, I>(utterances: I, lambda: f64) -> Result<SyntaxMetrics>
where
    I: IntoIterator<Item = &'a Utterance>,
{
    check_lambda(lambda)?;
    let mut parts = Vec::new();
    let mut skipped = 0;
    for u in utterances {
        if u.is_parsed() {
            parts.push(tree_stats(u)?);
        } else {
            warn!("skipping utterance {} without a dependency tree", u.id);
            skipped += 1;
        }
    }
    if parts.is_empty() {
        return Err(Error::Undefined("no parsed utterance in window".into()));
    }
    let merged = TreeStats::merge(&parts);
    Ok(SyntaxMetrics {
        sc: syntactic_complexity(&merged, lambda)?,
        adl: average_dependency_length(&merged),
        skipped,
    })
}
