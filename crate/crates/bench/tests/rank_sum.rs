use proptest::prelude::*;

use railopt_bench::stats::{midranks, wilcoxon_rank_sum, EXACT_LIMIT};

/// Two-sided exact p-value by listing every way of choosing which `m` of the
/// pooled observations belong to the first sample.
fn enumerate_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let m = a.len();
    // Midranks computed by counting, independent of the library's sort.
    let rank = |x: f64| {
        let below = pooled.iter().filter(|&&y| y < x).count() as f64;
        let equal = pooled.iter().filter(|&&y| y == x).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = pooled.iter().map(|&x| rank(x)).collect();
    let observed: f64 = ranks[..m].iter().sum();
    let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let s: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        total += 1;
        le += u64::from(s <= observed + 1e-9);
        ge += u64::from(s >= observed - 1e-9);
    }
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

fn sample(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    // Small integer support so that ties are common.
    proptest::collection::vec((0i32..8).prop_map(f64::from), 1..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn exact_p_values_match_full_enumeration(a in sample(11), b in sample(11)) {
        prop_assume!(a.len() + b.len() <= EXACT_LIMIT);
        let all_equal = a.iter().chain(&b).all(|&x| x == a[0]);
        let t = wilcoxon_rank_sum(&a, &b);
        prop_assert!(t.exact);
        let expect = if all_equal { 1.0 } else { enumerate_p(&a, &b) };
        prop_assert!((t.p_value - expect).abs() <= 1e-12, "{} vs {}", t.p_value, expect);
    }

    #[test]
    fn swapping_the_samples_keeps_the_p_value(a in sample(12), b in sample(12)) {
        let (x, y) = (wilcoxon_rank_sum(&a, &b), wilcoxon_rank_sum(&b, &a));
        prop_assert!((x.p_value - y.p_value).abs() < 1e-12);
        prop_assert!((x.shift + y.shift).abs() < 1e-12);
    }

    #[test]
    fn midranks_sum_to_the_triangle_number(v in sample(30)) {
        let n = v.len() as f64;
        prop_assert!((midranks(&v).iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }
}

#[test]
fn every_split_up_to_twenty_matches_enumeration() {
    // Continuous, tie-free samples at every size split.
    for n in 2..=EXACT_LIMIT {
        for m in 1..n {
            let a: Vec<f64> = (0..m).map(|i| (i * 7 % 13) as f64 + 0.25 * i as f64).collect();
            let b: Vec<f64> = (0..n - m).map(|i| (i * 5 % 11) as f64 + 0.1 + 0.3 * i as f64).collect();
            let t = wilcoxon_rank_sum(&a, &b);
            assert!((t.p_value - enumerate_p(&a, &b)).abs() <= 1e-12, "m {m} n {n}");
        }
    }
}

#[test]
fn separated_triples() {
    let t = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]);
    assert_eq!(t.statistic, 6.0);
    // One extreme split in each tail out of C(6, 3) = 20.
    assert!((t.p_value - 2.0 / 20.0).abs() < 1e-15);
}

#[test]
fn hand_ranked_pair() {
    // Two groups of eight without ties; ranked by hand the first holds
    // ranks 2, 3, 6, 9, 10, 11, 12 and 13.
    let a = [0.8, 0.83, 1.89, 1.04, 1.45, 1.38, 1.91, 1.64];
    let b = [1.15, 0.88, 0.9, 0.74, 1.21, 2.1, 1.96, 1.99];
    let t = wilcoxon_rank_sum(&a, &b);
    assert!(t.exact);
    assert_eq!(t.statistic, 66.0);
    assert!((t.p_value - enumerate_p(&a, &b)).abs() <= 1e-12);
    assert!(t.p_value > 0.5);
}

#[test]
fn eleven_runs_apart_are_significant() {
    let a: Vec<f64> = (0..11).map(|i| 100.0 + i as f64).collect();
    let b: Vec<f64> = (0..11).map(|i| 200.0 + i as f64).collect();
    let t = wilcoxon_rank_sum(&a, &b);
    assert!(!t.exact);
    assert!(t.p_value < 0.01);
    assert!(t.shift < 0.0);
}
