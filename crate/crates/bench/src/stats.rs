//! Two-sample Wilcoxon rank-sum test.
//!
//! Ties receive midranks. Up to [`EXACT_LIMIT`] observations in total the
//! null distribution of the rank sum is computed exactly by counting subsets
//! over doubled (integer) midranks; above that a normal approximation with a
//! tie-corrected variance and continuity correction is used.

use statrs::distribution::{ContinuousCDF, Normal};

/// Largest combined sample size handled by exact enumeration.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSum {
    /// Rank sum of the first sample.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
    /// Mean rank of the first sample minus that of the second; negative when
    /// the first sample tends to be smaller.
    pub shift: f64,
}

/// Midranks (1-based) of `values`, in input order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k + 1;
        while e < idx.len() && values[idx[e]] == values[idx[k]] {
            e += 1;
        }
        let r = (k + 1 + e) as f64 / 2.0;
        for &i in &idx[k..e] {
            ranks[i] = r;
        }
        k = e;
    }
    ranks
}

/// Two-sided rank-sum test of `a` against `b`.
///
/// # Panics
/// If either sample is empty.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> RankSum {
    assert!(!a.is_empty() && !b.is_empty(), "rank-sum test needs two non-empty samples");
    let (m, n) = (a.len(), b.len());
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&all);
    let w: f64 = ranks[..m].iter().sum();
    let shift = w / m as f64 - ranks[m..].iter().sum::<f64>() / n as f64;
    if all.iter().all(|&v| v == all[0]) {
        return RankSum { statistic: w, p_value: 1.0, exact: m + n <= EXACT_LIMIT, shift };
    }
    if m + n <= EXACT_LIMIT {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let obs: usize = doubled[..m].iter().sum();
        let (le, ge) = exact_tails(&doubled, m, obs);
        return RankSum { statistic: w, p_value: (2.0 * le.min(ge)).min(1.0), exact: true, shift };
    }
    let total = (m + n) as f64;
    let mean = m as f64 * (total + 1.0) / 2.0;
    let ties: f64 = tie_sizes(&all).map(|t| t * t * t - t).sum();
    let var = m as f64 * n as f64 / 12.0 * (total + 1.0 - ties / (total * (total - 1.0)));
    if var <= 0.0 {
        return RankSum { statistic: w, p_value: 1.0, exact: false, shift };
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    RankSum { statistic: w, p_value: (2.0 * normal.sf(z)).min(1.0), exact: false, shift }
}

fn tie_sizes(values: &[f64]) -> impl Iterator<Item = f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut k = 0;
    while k < v.len() {
        let e = k + v[k..].iter().take_while(|&&x| x == v[k]).count();
        out.push((e - k) as f64);
        k = e;
    }
    out.into_iter()
}

/// `P(S <= obs)` and `P(S >= obs)` where `S` is the sum of `m` of the
/// `doubled` ranks drawn without replacement.
fn exact_tails(doubled: &[usize], m: usize, obs: usize) -> (f64, f64) {
    let max: usize = doubled.iter().sum();
    // ways[k][s]: subsets of size k with doubled-rank sum s.
    let mut ways = vec![vec![0.0f64; max + 1]; m + 1];
    ways[0][0] = 1.0;
    for &r in doubled {
        for k in (1..=m).rev() {
            let (lo, hi) = ways.split_at_mut(k);
            for s in (r..=max).rev() {
                hi[0][s] += lo[k - 1][s - r];
            }
        }
    }
    let dist = &ways[m];
    let total: f64 = dist.iter().sum();
    let le: f64 = dist[..=obs].iter().sum();
    let ge: f64 = dist[obs..].iter().sum();
    (le / total, ge / total)
}

/// `a` beats `b` (lower is better) at the given significance level.
pub fn dominates(a: &[f64], b: &[f64], alpha: f64) -> bool {
    let t = wilcoxon_rank_sum(a, b);
    t.p_value < alpha && t.shift < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_triples_give_a_tenth() {
        let t = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]);
        assert_eq!(t.statistic, 6.0);
        assert!(t.exact);
        assert!((t.p_value - 0.1).abs() < 1e-15);
        assert!(t.shift < 0.0);
    }

    #[test]
    fn identical_samples_are_indistinguishable() {
        let a = [4.0, 4.0, 4.0];
        assert_eq!(wilcoxon_rank_sum(&a, &a).p_value, 1.0);
        let b = [1.0, 5.0, 9.0];
        assert_eq!(wilcoxon_rank_sum(&b, &b).p_value, 1.0);
    }

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn normal_branch_agrees_with_known_value() {
        // 11 vs 11, fully separated: W = 66, mean 126.5, var 11 * 11 * 23 / 12.
        let a: Vec<f64> = (0..11).map(f64::from).collect();
        let b: Vec<f64> = (100..111).map(f64::from).collect();
        let t = wilcoxon_rank_sum(&a, &b);
        assert!(!t.exact);
        let z = (126.5f64 - 66.0 - 0.5) / (11.0f64 * 11.0 * 23.0 / 12.0).sqrt();
        let expect = 2.0 * Normal::standard().sf(z);
        assert!((t.p_value - expect).abs() < 1e-12);
        assert!(t.p_value < 0.01);
    }
}
