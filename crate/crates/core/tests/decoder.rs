mod common;

use common::{brute_force_best, brute_force_violations, lower_bounds, small_instance};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use railopt_core::instance_gen::{generate, GeneratorParams};
use railopt_core::rail_model::{validate_schedule, TrainId};
use railopt_core::scheduler::{
    delay, evaluate_fitness, exhaustive_best, next_permutation, permutation_count, schedule, Permutation,
    SchedulerConfig,
};
use railopt_core::{Instance, Time};

fn gen(params: GeneratorParams) -> Instance {
    generate::<Time>(&params).expect("generator succeeds").instance
}

fn shuffled(n: usize, seed: u64) -> Permutation {
    let mut v: Vec<TrainId> = (0..n as u32).map(TrainId).collect();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Permutation(v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decoded_schedules_satisfy_every_constraint(
        seed in 0u64..10_000,
        order in 0u64..1_000,
        n in 3usize..14,
        viol in 0.0f64..0.4,
    ) {
        let inst = gen(GeneratorParams { n_trains: n, n_nodes: 6, violation_rate: viol, seed, ..GeneratorParams::default() });
        let problem = inst.problem().unwrap();
        let cfg = SchedulerConfig::for_problem(&problem);
        let r = schedule(&problem, &shuffled(n, order), &cfg);
        let bad = brute_force_violations(&inst, &lower_bounds(&inst), &r.assignments);
        prop_assert!(bad.is_empty(), "{bad:?}");
        prop_assert!(validate_schedule(&problem, &r.assignments).is_empty());
        prop_assert!(r.scheduled().count() > 0);
        prop_assert!(r.kick_count.iter().all(|&k| k <= cfg.kick_limit));
        let arrivals: Time = r.assignments.iter().flatten().flatten().map(|a| a.arrival).sum();
        prop_assert_eq!(r.fitness, arrivals + cfg.penalty * r.unscheduled.len() as Time);
        prop_assert_eq!(r.fitness, evaluate_fitness(&r, &problem, &cfg));
        for (t, rows) in r.assignments.iter().enumerate() {
            prop_assert_eq!(rows.is_none(), r.unscheduled.contains(&TrainId(t as u32)));
        }
        if r.is_complete() {
            prop_assert!(delay(&r, &problem) >= 0);
        }
    }

    #[test]
    fn decoding_is_a_pure_function(seed in 0u64..10_000, order in 0u64..1_000) {
        let inst = gen(GeneratorParams { n_trains: 10, seed, ..GeneratorParams::default() });
        let problem = inst.problem().unwrap();
        let cfg = SchedulerConfig::for_problem(&problem);
        let p = shuffled(10, order);
        let a = schedule(&problem, &p, &cfg);
        let b = schedule(&problem, &p, &cfg);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn insertion_order_lists_each_scheduled_train(seed in 0u64..10_000, order in 0u64..1_000) {
        let inst = gen(GeneratorParams { n_trains: 9, density: 1.0, seed, ..GeneratorParams::default() });
        let problem = inst.problem().unwrap();
        let r = schedule(&problem, &shuffled(9, order), &SchedulerConfig::for_problem(&problem));
        let mut seen: Vec<u32> = r.insertion_order.iter().map(|t| t.0).collect();
        seen.sort_unstable();
        seen.dedup();
        let scheduled: Vec<u32> = r.scheduled().map(|(t, _)| t.0).collect();
        prop_assert!(scheduled.iter().all(|t| seen.contains(t)));
    }
}

#[test]
fn unperturbed_clean_timetable_decodes_to_itself() {
    for seed in 0..10 {
        let inst = gen(GeneratorParams { n_trains: 12, violation_rate: 0.0, seed, ..GeneratorParams::default() })
            .with_perturbation(None);
        let problem = inst.problem().unwrap();
        let r = schedule(&problem, &Permutation::identity(12), &SchedulerConfig::for_problem(&problem));
        assert!(r.is_complete(), "seed {seed}");
        assert_eq!(delay(&r, &problem), 0, "seed {seed}");
    }
}

#[test]
fn exhaustive_search_matches_an_independent_enumeration() {
    for seed in 0..6 {
        let inst = small_instance(5, seed);
        let problem = inst.problem().unwrap();
        let cfg = SchedulerConfig::for_problem(&problem);
        let (perm, best) = exhaustive_best(&problem, &cfg, 1_000).expect("120 orders fit the budget");
        assert_eq!(best, brute_force_best(&problem, &cfg), "seed {seed}");
        assert_eq!(schedule(&problem, &perm, &cfg).fitness, best);
        assert_eq!(exhaustive_best(&problem, &cfg, 1_000).unwrap(), (perm, best));
    }
}

#[test]
fn exhaustive_search_respects_its_budget() {
    let inst = small_instance(6, 1);
    let problem = inst.problem().unwrap();
    assert!(exhaustive_best(&problem, &SchedulerConfig::for_problem(&problem), 719).is_none());
}

#[test]
fn next_permutation_visits_every_order_once() {
    for n in 0..=6usize {
        let mut p: Vec<TrainId> = (0..n as u32).map(TrainId).collect();
        let mut seen = std::collections::BTreeSet::new();
        loop {
            assert!(seen.insert(p.clone()));
            if !next_permutation(&mut p) {
                break;
            }
        }
        let expect: u64 = (1..=n as u64).product();
        assert_eq!(seen.len() as u64, expect);
        assert_eq!(permutation_count(n), expect);
    }
    assert_eq!(permutation_count(30), u64::MAX);
}

#[test]
fn zero_kick_budget_disables_kicks() {
    let mut differ = 0;
    for seed in 0..20 {
        let inst = gen(GeneratorParams { n_trains: 14, density: 1.0, violation_rate: 0.3, seed, ..GeneratorParams::default() });
        let problem = inst.problem().unwrap();
        let p = shuffled(14, seed);
        let none = schedule(&problem, &p, &SchedulerConfig::for_problem(&problem).with_kick_limit(0));
        assert!(none.kick_count.iter().all(|&k| k == 0));
        assert!(brute_force_violations(&inst, &lower_bounds(&inst), &none.assignments).is_empty());
        let three = schedule(&problem, &p, &SchedulerConfig::for_problem(&problem));
        differ += usize::from(none != three);
    }
    // Kicks matter on at least some contended instances.
    assert!(differ > 0);
}
