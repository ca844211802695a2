mod common;

use std::collections::BTreeMap;

use common::{small_instance, small_params};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use railopt_core::ea::{
    draw_transposition_count, ept_replacement, evolve, plus_replacement, swap_mutation, temperature, AnnealParams,
    EAConfig, Individual, Replacement,
};
use railopt_core::inoculation::{compute_inoculant, init_population, init_random, perturb, InitScheme};
use railopt_core::instance_gen::{generate, GeneratorParams};
use railopt_core::rail_model::TrainId;
use railopt_core::scheduler::{exhaustive_best, schedule, Permutation, SchedulerConfig};
use railopt_core::Time;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn arb_perm(max: usize) -> impl Strategy<Value = Permutation> {
    (1..max).prop_flat_map(|n| Just((0..n as u32).map(TrainId).collect::<Vec<_>>()).prop_shuffle()).prop_map(Permutation)
}

/// Pearson chi-square statistic of `observed` against `expected` counts.
fn chi_square(observed: &[f64], expected: &[f64]) -> f64 {
    observed.iter().zip(expected).map(|(o, e)| (o - e) * (o - e) / e).sum()
}

fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    let mut ln_c = 0.0;
    for i in 0..k {
        ln_c += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    (ln_c + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

proptest! {
    #[test]
    fn mutation_keeps_permutations(p in arb_perm(40), count in 0u64..60, r in proptest::option::of(1usize..8), seed: u64) {
        let q = swap_mutation(&p, r, count, &mut rng(seed));
        prop_assert!(q.is_valid(p.len()));
    }

    #[test]
    fn one_transposition_stays_within_the_radius(p in arb_perm(40), r in 1usize..6, seed: u64) {
        prop_assume!(p.len() >= 2);
        let q = swap_mutation(&p, Some(r), 1, &mut rng(seed));
        let moved: Vec<usize> = (0..p.len()).filter(|&i| p.0[i] != q.0[i]).collect();
        prop_assert_eq!(moved.len(), 2);
        prop_assert!(moved[1] - moved[0] <= r);
    }

    #[test]
    fn perturbation_keeps_permutations(p in arb_perm(60), pr in 0u64..600, seed: u64) {
        prop_assert!(perturb(&p, pr, &mut rng(seed)).is_valid(p.len()));
    }

    #[test]
    fn plus_replacement_equals_a_full_sort(fit in proptest::collection::vec(0i64..20, 2..40), mu in 1usize..12) {
        let all: Vec<Individual<i64>> = fit
            .iter()
            .enumerate()
            .map(|(k, &f)| Individual { genome: Permutation::identity(1), fitness: f, born: (k % 3) as u32, id: k as u64 })
            .collect();
        let split = all.len() / 3;
        let got = plus_replacement(all[..split].to_vec(), all[split..].to_vec(), mu);
        let mut keys: Vec<(i64, u32, u64)> = all.iter().map(|i| (i.fitness, i.born, i.id)).collect();
        keys.sort();
        keys.truncate(mu);
        let got: Vec<(i64, u32, u64)> = got.iter().map(|i| (i.fitness, i.born, i.id)).collect();
        prop_assert_eq!(got, keys);
    }

    #[test]
    fn population_schemes_keep_permutations(seed: u64, size in 1usize..30) {
        let i0 = Permutation::identity(25);
        for s in [InitScheme::MassMutation { pr: 3 }, InitScheme::GradualPerturbation { pr0: 0, inc: 1 }, InitScheme::three_layers(), InitScheme::two_layers()] {
            let pop = init_population(&i0, &s, size, &mut rng(seed)).unwrap();
            prop_assert_eq!(pop.len(), size);
            prop_assert!(pop.iter().all(|p| p.is_valid(25)));
        }
    }
}

#[test]
fn annealing_formula_agrees_with_the_logistic_form() {
    let p = AnnealParams { n0: 3, t0: 50.0, t_inf: 4.0, gamma: 0.2 };
    for n in 4..300u32 {
        let x = -0.2 * (n - 3) as f64;
        let logistic = 4.0 + 2.0 * 46.0 * (1.0 - 1.0 / (1.0 + x.exp()));
        assert!((temperature(n, &p) - logistic).abs() < 1e-9, "n = {n}");
    }
}

#[test]
fn binomial_counts_follow_the_binomial_law() {
    let mut r = rng(11);
    let draws = 200_000;
    let mut hist = [0.0; 17];
    for _ in 0..draws {
        hist[draw_transposition_count(4.0f64, &mut r) as usize] += 1.0;
    }
    // Pool the sparse upper tail into one cell.
    let expected: Vec<f64> = (0..=16).map(|k| binomial_pmf(16, 0.25, k) * draws as f64).collect();
    let (mut obs, mut exp) = (hist[..10].to_vec(), expected[..10].to_vec());
    obs.push(hist[10..].iter().sum());
    exp.push(expected[10..].iter().sum());
    // 10 degrees of freedom, 0.1% critical value 29.59.
    assert!(chi_square(&obs, &exp) < 29.59);
}

#[test]
fn fractional_temperatures_keep_their_mean() {
    let mut r = rng(5);
    let draws = 100_000;
    let mean = (0..draws).map(|_| draw_transposition_count(2.5f64, &mut r) as f64).sum::<f64>() / draws as f64;
    assert!((mean - 2.5).abs() < 0.03, "{mean}");
}

#[test]
fn random_permutations_are_uniform() {
    let mut r = rng(3);
    let mut counts: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for p in init_random(60_000, 3, &mut r) {
        *counts.entry(p.0.iter().map(|t| t.0).collect()).or_default() += 1.0;
    }
    assert_eq!(counts.len(), 6);
    let obs: Vec<f64> = counts.values().copied().collect();
    // 5 degrees of freedom, 0.1% critical value 20.52.
    assert!(chi_square(&obs, &[10_000.0; 6]) < 20.52);
}

#[test]
fn tournament_is_fair_among_equals() {
    let mut r = rng(9);
    let (n, mu, rounds) = (20usize, 10usize, 20_000);
    let mut survived = vec![0.0; n];
    for _ in 0..rounds {
        let pool: Vec<Individual<i64>> =
            (0..n).map(|k| Individual { genome: Permutation::identity(1), fitness: 7, born: 0, id: k as u64 }).collect();
        for i in ept_replacement(pool, 10, mu, &mut r) {
            survived[i.id as usize] += 1.0;
        }
    }
    // 19 degrees of freedom, 0.1% critical value 43.82.
    assert!(chi_square(&survived, &vec![(rounds * mu / n) as f64; n]) < 43.82);
}

#[test]
fn tournament_prefers_the_fitter() {
    let mut r = rng(2);
    let mut best_kept = 0;
    for _ in 0..1_000 {
        let pool: Vec<Individual<i64>> =
            (0..20).map(|k| Individual { genome: Permutation::identity(1), fitness: k, born: 0, id: k as u64 }).collect();
        best_kept += usize::from(ept_replacement(pool, 10, 10, &mut r).iter().any(|i| i.id == 0));
    }
    assert_eq!(best_kept, 1_000);
}

/// Spearman rank correlation between a permutation and the identity.
fn spearman(p: &Permutation) -> f64 {
    let n = p.len() as f64;
    let d2: f64 = p.0.iter().enumerate().map(|(i, t)| (i as f64 - t.0 as f64).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn five_hundred_transpositions_look_random_at_fifty_trains() {
    let i0 = Permutation::identity(50);
    let k = 400;
    let mut r = rng(17);
    let perturbed: Vec<f64> = (0..k).map(|_| spearman(&perturb(&i0, 500, &mut r))).collect();
    let uniform: Vec<f64> = init_random(k, 50, &mut r).iter().map(spearman).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    };
    // Under uniformity rho has mean 0 and variance 1 / (n - 1).
    let se = (1.0 / 49.0 / k as f64).sqrt();
    assert!(mean(&perturbed).abs() < 4.0 * se, "{}", mean(&perturbed));
    assert!(mean(&uniform).abs() < 4.0 * se);
    let ratio = var(&perturbed) / var(&uniform);
    assert!((0.7..1.4).contains(&ratio), "{ratio}");
    // A light perturbation stays close to the inoculant.
    assert!(spearman(&perturb(&i0, 3, &mut r)) > 0.9);
}

#[test]
fn plus_traces_never_get_worse() {
    for seed in 0..6 {
        let inst = generate::<Time>(&GeneratorParams { n_trains: 15, density: 0.8, violation_rate: 0.2, seed, ..GeneratorParams::default() })
            .unwrap()
            .instance;
        let problem = inst.problem().unwrap();
        let cfg = SchedulerConfig::for_problem(&problem);
        let ea = EAConfig::<f64> { generations: 30, seed, ..EAConfig::default() };
        let trace = evolve(&problem, &init_random(10, 15, &mut rng(seed)), &ea, &cfg).unwrap();
        assert_eq!(trace.records.len(), 31);
        for w in trace.records.windows(2) {
            assert!(w[1].best_fitness <= w[0].best_fitness);
            assert_eq!(w[1].evals, w[0].evals + 70);
        }
        assert_eq!(trace.best_fitness(), trace.final_record().best_fitness);
        assert_eq!(schedule(&problem, &trace.best, &cfg).fitness, trace.best_fitness());
    }
}

#[test]
fn evolution_is_reproducible_and_thread_count_independent() {
    let inst = generate::<Time>(&GeneratorParams { n_trains: 14, seed: 4, ..GeneratorParams::default() }).unwrap().instance;
    let problem = inst.problem().unwrap();
    let cfg = SchedulerConfig::for_problem(&problem);
    let ea = EAConfig::<f64> { generations: 15, seed: 21, replacement: Replacement::Ept { opponents: 10 }, ..EAConfig::default() };
    let initial = init_random(10, 14, &mut rng(1));
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| evolve(&problem, &initial, &ea, &cfg).unwrap())
    };
    let (a, b) = (run(1), run(3));
    let strip = |t: &railopt_core::RunTrace| t.records.iter().map(|r| (r.best_fitness, r.mean_fitness, r.evals)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.best, b.best);
}

#[test]
fn oversized_layer_pools_are_cut_to_mu() {
    let inst = small_instance(6, 3);
    let problem = inst.problem().unwrap();
    let cfg = SchedulerConfig::for_problem(&problem);
    let pool = init_population(&Permutation::identity(6), &InitScheme::three_layers(), 30, &mut rng(0)).unwrap();
    for replacement in [Replacement::Plus, Replacement::Ept { opponents: 10 }] {
        let ea = EAConfig::<f64> { generations: 2, replacement, ..EAConfig::default() };
        let trace = evolve(&problem, &pool, &ea, &cfg).unwrap();
        assert_eq!(trace.records[0].evals, 30);
        assert_eq!(trace.records[2].evals, 30 + 140);
    }
}

#[test]
fn evolution_finds_small_optima() {
    let mut hits = 0;
    let mut total = 0;
    for seed in 0..4 {
        let inst = small_instance(5, seed);
        let problem = inst.problem().unwrap();
        let cfg = SchedulerConfig::for_problem(&problem);
        let (_, best) = exhaustive_best(&problem, &cfg, 1_000).unwrap();
        for run in 0..5 {
            let ea = EAConfig::<f64> { generations: 50, seed: run, ..EAConfig::default() };
            let trace = evolve(&problem, &init_random(10, 5, &mut rng(run)), &ea, &cfg).unwrap();
            assert!(trace.best_fitness() >= best);
            hits += usize::from(trace.best_fitness() == best);
            total += 1;
        }
    }
    assert_eq!(hits, total);
}

#[test]
fn inoculant_beats_typical_random_orders() {
    for seed in 0..4 {
        let g = generate::<Time>(&GeneratorParams { violation_rate: 0.3, ..small_params(14, seed) }).unwrap();
        let empty = g.instance.with_perturbation(None).problem().unwrap();
        let cfg = SchedulerConfig::for_problem(&empty);
        let ino = compute_inoculant(&empty, &EAConfig::<f64> { generations: 40, ..EAConfig::default() }, &cfg).unwrap();
        let mut r = rng(seed);
        let mut random: Vec<Time> = (0..101)
            .map(|_| {
                let mut v: Vec<TrainId> = (0..14).map(TrainId).collect();
                for i in (1..v.len()).rev() {
                    v.swap(i, r.random_range(0..=i));
                }
                schedule(&empty, &Permutation(v), &cfg).fitness
            })
            .collect();
        random.sort_unstable();
        assert!(ino.provenance.fitness <= random[50], "seed {seed}");
        assert_eq!(schedule(&empty, &ino.permutation, &cfg).fitness, ino.provenance.fitness);
    }
}
