//! Permutation evolutionary loop.
//!
//! Ordered selection: every parent in turn produces `offspring_per_parent`
//! mutants, so selection pressure comes only from replacement, either
//! `(mu + lambda)` or an evolutionary-programming tournament. Mutation is a
//! number of radius-limited transpositions whose mean follows a constant or
//! annealed temperature, optionally randomised by a binomial draw.
//!
//! Each child draws its randomness from its own ChaCha stream keyed by
//! `(seed, generation, child index)`, so decoding offspring in parallel does
//! not change any result.

use std::io::{self, Write};
use std::time::{Duration, Instant};

use num_traits::Float;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rail_model::PerturbedProblem;
use crate::scheduler::{schedule, Permutation, ScheduleResult, SchedulerConfig};
use crate::time::TimeScalar;

/// Annealing schedule parameters `(n0, t0, t_inf, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealParams<F> {
    /// Generations during which the temperature stays at `t0`.
    pub n0: u32,
    pub t0: F,
    pub t_inf: F,
    /// Decay rate of the sigmoid.
    pub gamma: F,
}

/// Mean transposition count at generation `n`.
///
/// Constant `t0` up to `n0`, then a sigmoid decay from `t0` towards `t_inf`:
/// `t_inf + 2 (t0 - t_inf) (1 - 1 / (1 + exp(-gamma (n - n0))))`, evaluated
/// as `t_inf + 2 (t0 - t_inf) / (1 + exp(gamma (n - n0)))` to stay finite.
pub fn temperature<F: Float>(n: u32, params: &AnnealParams<F>) -> F {
    if n <= params.n0 {
        return params.t0;
    }
    let x = params.gamma * F::from(n - params.n0).expect("generation fits the float type");
    let two = F::one() + F::one();
    params.t_inf + two * (params.t0 - params.t_inf) / (F::one() + x.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemperatureSchedule<F> {
    Constant { t: F, binomial: bool },
    Annealed { params: AnnealParams<F>, binomial: bool },
}

impl<F: Float> TemperatureSchedule<F> {
    pub fn at(&self, n: u32) -> F {
        match self {
            Self::Constant { t, .. } => *t,
            Self::Annealed { params, .. } => temperature(n, params),
        }
    }

    pub fn binomial(&self) -> bool {
        match self {
            Self::Constant { binomial, .. } | Self::Annealed { binomial, .. } => *binomial,
        }
    }

    /// Transposition count for one child at generation `n`.
    pub fn draw<R: Rng + ?Sized>(&self, n: u32, rng: &mut R) -> u64 {
        let t = self.at(n);
        if self.binomial() {
            draw_transposition_count(t, rng)
        } else {
            t.max(F::zero()).round().to_u64().unwrap_or(0)
        }
    }
}

/// Number of transpositions with mean `mean`: `Binomial(4 ceil(T), T / (4 ceil(T)))`.
pub fn draw_transposition_count<F: Float, R: Rng + ?Sized>(mean: F, rng: &mut R) -> u64 {
    let t = mean.to_f64().unwrap_or(0.0);
    if !(t > 0.0) {
        return 0;
    }
    let n = 4 * t.ceil() as u64;
    let p = (t / n as f64).min(1.0);
    Binomial::new(n, p).expect("p in (0, 1]").sample(rng)
}

/// Apply `count` transpositions to a copy of `p`. Each picks `i` uniformly and
/// `j != i` uniformly within `radius` of `i` (anywhere when `radius` is `None`).
pub fn swap_mutation<R: Rng + ?Sized>(p: &Permutation, radius: Option<usize>, count: u64, rng: &mut R) -> Permutation {
    let mut out = p.clone();
    let n = out.0.len();
    if n < 2 {
        return out;
    }
    let r = radius.unwrap_or(n).max(1);
    for _ in 0..count {
        let i = rng.random_range(0..n);
        let lo = i.saturating_sub(r);
        let hi = (i + r).min(n - 1);
        let mut j = rng.random_range(lo..hi);
        if j >= i {
            j += 1;
        }
        out.0.swap(i, j);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Replacement {
    /// Best `mu` of parents and offspring.
    Plus,
    /// Tournament: each individual meets `opponents` random others.
    Ept { opponents: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EAConfig<F = f64> {
    pub mu: usize,
    pub lambda: usize,
    pub offspring_per_parent: usize,
    pub replacement: Replacement,
    /// Swap radius; `None` is unlimited.
    pub radius: Option<usize>,
    pub temperature: TemperatureSchedule<F>,
    pub generations: u32,
    pub seed: u64,
    /// Optional wall-clock cap, checked between generations.
    pub time_budget: Option<Duration>,
}

impl<F: Float> Default for EAConfig<F> {
    fn default() -> Self {
        Self {
            mu: 10,
            lambda: 70,
            offspring_per_parent: 7,
            replacement: Replacement::Plus,
            radius: None,
            temperature: TemperatureSchedule::Constant { t: F::from(4.0).unwrap(), binomial: true },
            generations: 100,
            seed: 0,
            time_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EaError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("initial population has {got} individuals, need at least {need}")]
    PopulationSize { got: usize, need: usize },
    #[error("initial individual {index} is not a permutation of the trains")]
    InvalidIndividual { index: usize },
}

impl<F: Float> EAConfig<F> {
    pub fn validate(&self) -> Result<(), EaError> {
        let bad = |m: &str| Err(EaError::Config(m.to_owned()));
        if self.mu == 0 {
            return bad("mu must be at least 1");
        }
        if self.offspring_per_parent == 0 || self.lambda != self.mu * self.offspring_per_parent {
            return bad("lambda must equal mu x offspring_per_parent");
        }
        if self.radius == Some(0) {
            return bad("swap radius must be at least 1");
        }
        if let Replacement::Ept { opponents: 0 } = self.replacement {
            return bad("tournament needs at least one opponent");
        }
        match self.temperature {
            TemperatureSchedule::Constant { t, .. } if !(t >= F::zero()) => bad("temperature must be non-negative"),
            TemperatureSchedule::Annealed { params: p, .. }
                if !(p.t_inf >= F::one() && p.t0 >= p.t_inf && p.gamma > F::zero()) =>
            {
                bad("annealing needs t0 >= t_inf >= 1 and gamma > 0")
            }
            _ => Ok(()),
        }
    }
}

/// An evaluated genotype.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Individual<T> {
    pub genome: Permutation,
    pub fitness: T,
    /// Generation of birth; 0 for the initial population.
    pub born: u32,
    /// Global creation index within the run.
    pub id: u64,
}

/// The `mu` best of `parents` and `offspring`. Equal fitness prefers the
/// older individual, then the lower creation index.
pub fn plus_replacement<T: Ord + Clone>(
    parents: Vec<Individual<T>>,
    offspring: Vec<Individual<T>>,
    mu: usize,
) -> Vec<Individual<T>> {
    let mut pool = parents;
    pool.extend(offspring);
    pool.sort_by(|a, b| (&a.fitness, a.born, a.id).cmp(&(&b.fitness, b.born, b.id)));
    pool.truncate(mu);
    pool
}

/// Tournament replacement. Each individual meets `opponents` others drawn
/// uniformly with replacement (never itself) and scores one point per
/// strictly better fitness. The `mu` highest scorers survive; equal scores
/// are ordered by a random key.
pub fn ept_replacement<T: Ord + Clone, R: Rng + ?Sized>(
    pool: Vec<Individual<T>>,
    opponents: usize,
    mu: usize,
    rng: &mut R,
) -> Vec<Individual<T>> {
    let n = pool.len();
    let mut scored: Vec<(usize, u64, usize)> = (0..n)
        .map(|i| {
            let mut wins = 0;
            if n > 1 {
                for _ in 0..opponents {
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    if pool[i].fitness < pool[j].fitness {
                        wins += 1;
                    }
                }
            }
            (wins, 0, i)
        })
        .collect();
    for s in &mut scored {
        s.1 = rng.random();
    }
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut slots: Vec<Option<Individual<T>>> = pool.into_iter().map(Some).collect();
    scored.iter().take(mu).map(|&(_, _, i)| slots[i].take().expect("each index once")).collect()
}

/// One trace row per completed generation (generation 0 is the initial population).
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord<T> {
    pub generation: u32,
    /// Best fitness among the parents after replacement.
    pub best_fitness: T,
    pub mean_fitness: f64,
    pub elapsed_s: f64,
    pub evals: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace<T> {
    pub records: Vec<GenerationRecord<T>>,
    /// Best genotype evaluated during the run.
    pub best: Permutation,
    pub best_result: ScheduleResult<T>,
}

pub const TRACE_CSV_HEADER: &str = "generation,best_fitness,mean_fitness,elapsed_s,evals";

impl<T: TimeScalar> RunTrace<T> {
    pub fn best_fitness(&self) -> T {
        self.best_result.fitness
    }

    pub fn final_record(&self) -> &GenerationRecord<T> {
        self.records.last().expect("generation 0 always recorded")
    }

    /// First generation whose best fitness is at most `threshold`.
    pub fn first_hit(&self, threshold: T) -> Option<u32> {
        self.records.iter().find(|r| r.best_fitness <= threshold).map(|r| r.generation)
    }

    /// Write the trace as CSV. With `timing` false the elapsed column is
    /// zero so that replays compare byte for byte.
    pub fn write_csv<W: Write>(&self, mut w: W, timing: bool) -> io::Result<()> {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            let elapsed = if timing { r.elapsed_s } else { 0.0 };
            writeln!(w, "{},{},{:.6},{:.6},{}", r.generation, r.best_fitness, r.mean_fitness, elapsed, r.evals)?;
        }
        Ok(())
    }
}

const MUTATION_TAG: u64 = 0x6d75_7461_7465;
const REPLACEMENT_TAG: u64 = 0x7265_706c_6163;

/// Deterministic substream for `(seed, tag, generation, index)`.
pub fn substream(seed: u64, tag: u64, generation: u32, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(((generation as u64) << 40) ^ index);
    rng
}

fn mean<T: TimeScalar>(pop: &[Individual<T>]) -> f64 {
    pop.iter().map(|i| i.fitness.as_f64()).sum::<f64>() / pop.len() as f64
}

/// Run the evolutionary loop from `initial`.
///
/// Oversized initial pools are cut down to `mu` with the configured
/// replacement before the first generation.
pub fn evolve<T: TimeScalar, F: Float + Sync>(
    problem: &PerturbedProblem<T>,
    initial: &[Permutation],
    config: &EAConfig<F>,
    scheduler: &SchedulerConfig<T>,
) -> Result<RunTrace<T>, EaError> {
    config.validate()?;
    if initial.len() < config.mu {
        return Err(EaError::PopulationSize { got: initial.len(), need: config.mu });
    }
    let n = problem.n_trains();
    if let Some(index) = initial.iter().position(|p| !p.is_valid(n)) {
        return Err(EaError::InvalidIndividual { index });
    }
    let start = Instant::now();
    let decode = |g: &Permutation| schedule(problem, g, scheduler).fitness;

    let mut next_id = 0u64;
    let pool: Vec<Individual<T>> = initial
        .par_iter()
        .enumerate()
        .map(|(k, g)| Individual { genome: g.clone(), fitness: decode(g), born: 0, id: k as u64 })
        .collect();
    next_id += pool.len() as u64;
    let mut evals = pool.len() as u64;
    let mut best = pool.iter().min_by(|a, b| (&a.fitness, a.id).cmp(&(&b.fitness, b.id))).cloned().expect("mu >= 1");

    let replace = |parents: Vec<Individual<T>>, offspring: Vec<Individual<T>>, generation: u32| match config
        .replacement
    {
        Replacement::Plus => plus_replacement(parents, offspring, config.mu),
        Replacement::Ept { opponents } => {
            let mut rng = substream(config.seed, REPLACEMENT_TAG, generation, 0);
            let mut pool = parents;
            pool.extend(offspring);
            ept_replacement(pool, opponents, config.mu, &mut rng)
        }
    };

    let mut parents = if pool.len() > config.mu { replace(pool, Vec::new(), 0) } else { pool };
    let record = |generation: u32, parents: &[Individual<T>], evals: u64| GenerationRecord {
        generation,
        best_fitness: parents.iter().map(|i| i.fitness).min().expect("mu >= 1"),
        mean_fitness: mean(parents),
        elapsed_s: start.elapsed().as_secs_f64(),
        evals,
    };
    let mut records = vec![record(0, &parents, evals)];

    for generation in 1..=config.generations {
        if config.time_budget.is_some_and(|b| start.elapsed() >= b) {
            break;
        }
        let base = next_id;
        let jobs: Vec<(u64, &Permutation)> = parents
            .iter()
            .flat_map(|p| std::iter::repeat_n(&p.genome, config.offspring_per_parent))
            .enumerate()
            .map(|(k, g)| (k as u64, g))
            .collect();
        let offspring: Vec<Individual<T>> = jobs
            .into_par_iter()
            .map(|(k, parent)| {
                let mut rng = substream(config.seed, MUTATION_TAG, generation, k);
                let t = config.temperature.draw(generation, &mut rng);
                let genome = swap_mutation(parent, config.radius, t, &mut rng);
                let fitness = decode(&genome);
                Individual { genome, fitness, born: generation, id: base + k }
            })
            .collect();
        next_id += offspring.len() as u64;
        evals += offspring.len() as u64;
        for o in &offspring {
            if o.fitness < best.fitness {
                best = o.clone();
            }
        }
        parents = replace(parents, offspring, generation);
        records.push(record(generation, &parents, evals));
    }

    let best_result = schedule(problem, &best.genome, scheduler);
    Ok(RunTrace { records, best: best.genome, best_result })
}
