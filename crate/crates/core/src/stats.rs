//! Kruskal-Wallis H test with eta-squared, Dunn's post-hoc test with
//! Bonferroni correction, and the distribution functions they need.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KruskalResult {
    pub cue: String,
    /// Tie-corrected H statistic.
    pub h: f64,
    pub df: usize,
    pub p: f64,
    /// `(H - k + 1) / (n - k)`; negative whenever `H < k - 1`.
    pub eta_squared: f64,
    pub group_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnResult {
    pub cue: String,
    pub pair: (String, String),
    pub z: f64,
    pub p_raw: f64,
    pub p_adj: f64,
}

/// Average ranks (1-based), ties sharing the mean of their rank range.
pub fn rank_with_ties(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

/// `sum(t^3 - t)` over tie groups of the pooled sample.
fn tie_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        total += t * t * t - t;
        i = j;
    }
    total
}

struct Pooled {
    n: usize,
    sizes: Vec<usize>,
    rank_sums: Vec<f64>,
    ties: f64,
}

fn pool(groups: &[Vec<f64>]) -> Result<Pooled> {
    if groups.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Degenerate(format!("group {i} is empty")));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite observation".into()));
    }
    let n = all.len();
    if n < groups.len() + 1 {
        return Err(Error::Degenerate(format!(
            "{n} observations are too few for {} groups",
            groups.len()
        )));
    }
    let ranks = rank_with_ties(&all);
    let mut rank_sums = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for g in groups {
        rank_sums.push(ranks[offset..offset + g.len()].iter().sum());
        offset += g.len();
    }
    let ties = tie_sum(&all);
    let nf = n as f64;
    if nf * nf * nf - nf - ties <= 0.0 {
        return Err(Error::Degenerate("all observations are identical".into()));
    }
    Ok(Pooled {
        n,
        sizes: groups.iter().map(Vec::len).collect(),
        rank_sums,
        ties,
    })
}

pub fn kruskal_wallis(cue: &str, groups: &[Vec<f64>]) -> Result<KruskalResult> {
    let p = pool(groups)?;
    let n = p.n as f64;
    let k = groups.len();
    let mut s = 0.0;
    for (r, &ni) in p.rank_sums.iter().zip(&p.sizes) {
        s += r * r / ni as f64;
    }
    // Single division keeps integer-valued rank sums exact.
    let h_raw = (12.0 * s - 3.0 * n * (n + 1.0) * (n + 1.0)) / (n * (n + 1.0));
    let correction = 1.0 - p.ties / (n * n * n - n);
    let h = (h_raw / correction).max(0.0);
    let df = k - 1;
    Ok(KruskalResult {
        cue: cue.to_string(),
        h,
        df,
        p: chi2_sf(h, df as f64),
        eta_squared: (h - k as f64 + 1.0) / (n - k as f64),
        group_sizes: p.sizes,
    })
}

/// Pairwise Dunn z-tests on mean ranks, two-sided, Bonferroni-adjusted over
/// all `k (k - 1) / 2` pairs. Pairs are `(i, j)` with `i < j` in group order.
pub fn dunn_posthoc(cue: &str, names: &[&str], groups: &[Vec<f64>]) -> Result<Vec<DunnResult>> {
    if names.len() != groups.len() {
        return Err(Error::InvalidParameter(
            "one name per group required".into(),
        ));
    }
    let p = pool(groups)?;
    let n = p.n as f64;
    let k = groups.len();
    let m = (k * (k - 1) / 2) as f64;
    let variance_base = n * (n + 1.0) / 12.0 - p.ties / (12.0 * (n - 1.0));
    let mean_rank: Vec<f64> = p
        .rank_sums
        .iter()
        .zip(&p.sizes)
        .map(|(r, &ni)| r / ni as f64)
        .collect();

    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let se = (variance_base * (1.0 / p.sizes[i] as f64 + 1.0 / p.sizes[j] as f64)).sqrt();
            let z = (mean_rank[i] - mean_rank[j]) / se;
            let p_raw = normal_two_sided(z);
            out.push(DunnResult {
                cue: cue.to_string(),
                pair: (names[i].to_string(), names[j].to_string()),
                z,
                p_raw,
                p_adj: bonferroni(p_raw, m),
            });
        }
    }
    Ok(out)
}

pub fn bonferroni(p_raw: f64, comparisons: f64) -> f64 {
    (comparisons * p_raw).min(1.0)
}

/// Chi-squared survival function `Q(df/2, x/2)`.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df / 2.0, x / 2.0)
}

/// `P(|Z| >= |z|)` for a standard normal, via `erfc(|z| / sqrt 2)`.
pub fn normal_two_sided(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    if x == 0.0 {
        1.0
    } else {
        // erfc(x) = Q(1/2, x^2)
        gamma_q(0.5, x * x)
    }
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Regularized upper incomplete gamma `Q(a, x)`: series for `x < a + 1`,
/// Lentz continued fraction otherwise.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut ap = a;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        (1.0 - sum * log_prefix.exp()).clamp(0.0, 1.0)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        (log_prefix.exp() * h).clamp(0.0, 1.0)
    }
}

/// Five-number summary with Tukey whiskers (1.5 IQR) and outliers, enough to
/// redraw a box plot. Quartiles use linear interpolation between order
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn box_summary(values: &[f64]) -> Option<BoxSummary> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s
        .iter()
        .copied()
        .filter(|v| *v >= lo_fence && *v <= hi_fence)
        .collect();
    Some(BoxSummary {
        n: s.len(),
        min: s[0],
        q1,
        median: quantile_sorted(&s, 0.5),
        q3,
        max: s[s.len() - 1],
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: s
            .iter()
            .copied()
            .filter(|v| *v < lo_fence || *v > hi_fence)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks() {
        assert_eq!(rank_with_ties(&[10.0, 20.0, 30.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(rank_with_ties(&[5.0, 5.0, 7.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(
            rank_with_ties(&[3.0, 1.0, 3.0, 3.0]),
            vec![3.0, 1.0, 3.0, 3.0]
        );
    }

    #[test]
    fn kw_textbook() {
        let g = vec![
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ];
        let r = kruskal_wallis("x", &g).unwrap();
        assert!((r.h - 7.2).abs() < 1e-12);
        assert_eq!(r.df, 2);
        assert!((r.eta_squared - 5.2 / 6.0).abs() < 1e-12);
        assert!((r.p - (-3.6f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn kw_errors() {
        assert!(kruskal_wallis("x", &[vec![1.0], vec![]]).is_err());
        assert!(kruskal_wallis("x", &[vec![1.0, 1.0], vec![1.0]]).is_err());
        assert!(kruskal_wallis("x", &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn chi2_closed_forms() {
        assert_eq!(chi2_sf(0.0, 3.0), 1.0);
        assert!((chi2_sf(2.0 * 2f64.ln(), 2.0) - 0.5).abs() < 1e-14);
        for x in [0.1, 1.0, 5.0, 30.0] {
            assert!((chi2_sf(x, 2.0) - (-x / 2.0).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn normal_tail() {
        assert_eq!(normal_two_sided(0.0), 1.0);
        assert!((normal_two_sided(1.959_963_984_540_054) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn dunn_identical_groups() {
        let g = vec![vec![1.0, 2.0, 3.0]; 4];
        let names = ["U", "PU", "NU", "MU"];
        let d = dunn_posthoc("x", &names, &g).unwrap();
        assert_eq!(d.len(), 6);
        for r in d {
            assert_eq!(r.z, 0.0);
            assert_eq!(r.p_adj, 1.0);
        }
    }

    #[test]
    fn dunn_extreme_pair_largest() {
        let g = vec![
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ];
        let d = dunn_posthoc("x", &["a", "b", "c"], &g).unwrap();
        let best = d
            .iter()
            .max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
            .unwrap();
        assert_eq!(best.pair, ("a".to_string(), "c".to_string()));
        // mean ranks 2 and 8; se = sqrt(9*10/12 * 2/3) = sqrt(5)
        assert!((best.z + 6.0 / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn box_plot() {
        let b = box_summary(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_high, 4.0);
        assert!(box_summary(&[]).is_none());
    }
}
