//! Permutation decoder: semi-greedy train insertion with conflict resolution
//! and bounded kicks.
//!
//! Trains are popped off a stack initialised with the permutation (front on
//! top) and inserted node by node. At each node every admissible route is
//! tried: `(a, d)` start at the perturbed lower bounds (or the previous
//! departure plus running time) and are pushed forward to each conflict's
//! clearing time until the checker reports nothing. The route with the
//! earliest departure wins, lowest index on ties. When every route at a node
//! is blocked by a conflict no forward shift can clear, the most recently
//! committed blocking train is kicked out of the schedule and pushed back on
//! the stack, at most `kick_limit` times per train. A train that cannot be
//! placed even then is left unscheduled and penalised in the fitness.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rail_model::first_conflict;
use crate::rail_model::{
    validate_schedule, Assignment, Candidate, Clearing, ConflictKind, Occupancy, PerturbedProblem, TrainId,
    Violation,
};
use crate::time::TimeScalar;

/// Genotype: an ordering of every train.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(pub Vec<TrainId>);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("not a permutation of {n} trains: {reason}")]
pub struct PermutationError {
    pub n: usize,
    pub reason: String,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self((0..n as u32).map(TrainId).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[TrainId] {
        &self.0
    }

    /// Bijection check against `0..n`.
    pub fn check(&self, n: usize) -> Result<(), PermutationError> {
        if self.0.len() != n {
            return Err(PermutationError { n, reason: format!("length {}", self.0.len()) });
        }
        let mut seen = vec![false; n];
        for t in &self.0 {
            match seen.get_mut(t.index()) {
                Some(s) if !*s => *s = true,
                Some(_) => return Err(PermutationError { n, reason: format!("train {t} repeated") }),
                None => return Err(PermutationError { n, reason: format!("unknown train {t}") }),
            }
        }
        Ok(())
    }

    pub fn is_valid(&self, n: usize) -> bool {
        self.check(n).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "T: TimeScalar + Serialize + serde::de::DeserializeOwned")]
pub struct SchedulerConfig<T> {
    /// Maximum number of times any one train may be kicked.
    pub kick_limit: u32,
    /// Fitness penalty per unscheduled train.
    pub penalty: T,
    /// Constraint-loop iterations per route before the route counts as blocked.
    pub iteration_cap: u32,
}

impl<T: TimeScalar> SchedulerConfig<T> {
    pub const DEFAULT_KICK_LIMIT: u32 = 3;
    pub const DEFAULT_ITERATION_CAP: u32 = 10_000;

    /// Defaults with the instance's penalty weight.
    pub fn for_problem(problem: &PerturbedProblem<T>) -> Self {
        Self {
            kick_limit: Self::DEFAULT_KICK_LIMIT,
            penalty: problem.penalty_weight(),
            iteration_cap: Self::DEFAULT_ITERATION_CAP,
        }
    }

    pub fn with_kick_limit(mut self, kick_limit: u32) -> Self {
        self.kick_limit = kick_limit;
        self
    }
}

/// Phenotype: a decoded schedule.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScheduleResult<T> {
    /// `[train]` → assignment per itinerary position, `None` if unscheduled.
    pub assignments: Vec<Option<Vec<Assignment<T>>>>,
    pub unscheduled: BTreeSet<TrainId>,
    pub fitness: T,
    pub kick_count: Vec<u32>,
    /// Trains in the order their insertions completed; kicked trains appear
    /// once per successful insertion.
    pub insertion_order: Vec<TrainId>,
}

impl<T: TimeScalar> ScheduleResult<T> {
    pub fn is_complete(&self) -> bool {
        self.unscheduled.is_empty()
    }

    pub fn scheduled(&self) -> impl Iterator<Item = (TrainId, &[Assignment<T>])> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_deref().map(|r| (TrainId(i as u32), r)))
    }

    /// Re-check the schedule with the model validator.
    pub fn violations(&self, problem: &PerturbedProblem<T>) -> Vec<Violation<T>> {
        validate_schedule(problem, &self.assignments)
    }
}

/// Total of arrivals over scheduled entries plus the penalty per unscheduled train.
pub fn evaluate_fitness<T: TimeScalar>(
    result: &ScheduleResult<T>,
    _problem: &PerturbedProblem<T>,
    config: &SchedulerConfig<T>,
) -> T {
    let arrivals = result
        .scheduled()
        .flat_map(|(_, rows)| rows.iter().map(|a| a.arrival))
        .fold(T::zero(), |acc, a| acc.sat_add(a));
    arrivals.sat_add(config.penalty.sat_mul(T::from_usize(result.unscheduled.len())))
}

/// `sum(a - a0)` over scheduled entries.
pub fn delay<T: TimeScalar>(result: &ScheduleResult<T>, problem: &PerturbedProblem<T>) -> T {
    let tt = &problem.instance().timetable;
    result
        .scheduled()
        .flat_map(|(t, rows)| rows.iter().enumerate().map(move |(pos, a)| a.arrival.sat_sub(tt.entry(t, pos).arrival)))
        .fold(T::zero(), |acc, d| acc.sat_add(d))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    Placed,
    /// Placed after removing these trains, which now wait on the stack.
    KickedOthers(Vec<TrainId>),
    Failed,
}

/// Mutable decoding state over a shared problem.
#[derive(Debug, Clone)]
pub struct DecodeState<'p, T> {
    problem: &'p PerturbedProblem<T>,
    config: SchedulerConfig<T>,
    occ: Occupancy<T>,
    stack: Vec<TrainId>,
    kick_count: Vec<u32>,
    completed_at: Vec<Option<u64>>,
    clock: u64,
    insertion_order: Vec<TrainId>,
    unscheduled: BTreeSet<TrainId>,
}

enum RouteOutcome<T> {
    Clean(Assignment<T>),
    Blocked(Vec<TrainId>),
}

impl<'p, T: TimeScalar> DecodeState<'p, T> {
    pub fn new(problem: &'p PerturbedProblem<T>, config: SchedulerConfig<T>) -> Self {
        let n = problem.n_trains();
        Self {
            problem,
            config,
            occ: Occupancy::new(problem),
            stack: Vec::with_capacity(n),
            kick_count: vec![0; n],
            completed_at: vec![None; n],
            clock: 0,
            insertion_order: Vec::with_capacity(n),
            unscheduled: BTreeSet::new(),
        }
    }

    pub fn occupancy(&self) -> &Occupancy<T> {
        &self.occ
    }

    pub fn kick_count(&self, train: TrainId) -> u32 {
        self.kick_count[train.index()]
    }

    /// Trains waiting on the stack, top last.
    pub fn stack(&self) -> &[TrainId] {
        &self.stack
    }

    pub fn is_scheduled(&self, train: TrainId) -> bool {
        self.completed_at[train.index()].is_some()
    }

    /// Place `train` node by node, kicking blockers when a node is unreachable.
    pub fn insert_train(&mut self, train: TrainId) -> InsertOutcome {
        debug_assert!(!self.is_scheduled(train));
        let len = self.problem.itinerary_len(train);
        let mut kicked = Vec::new();
        let mut pos = 0;
        while pos < len {
            match self.place_node(train, pos) {
                RouteOutcome::Clean(a) => {
                    self.occ.place(self.problem, train, pos, a);
                    pos += 1;
                }
                RouteOutcome::Blocked(mut blockers) => {
                    blockers.sort_by_key(|b| std::cmp::Reverse((self.completed_at[b.index()], *b)));
                    blockers.dedup();
                    match blockers.into_iter().find(|&b| self.kick(b)) {
                        Some(b) => kicked.push(b),
                        None => {
                            self.occ.remove_train(self.problem, train);
                            return InsertOutcome::Failed;
                        }
                    }
                }
            }
        }
        self.clock += 1;
        self.completed_at[train.index()] = Some(self.clock);
        self.insertion_order.push(train);
        if kicked.is_empty() {
            InsertOutcome::Placed
        } else {
            InsertOutcome::KickedOthers(kicked)
        }
    }

    /// Remove a scheduled `blocker` and push it on the stack, unless it has
    /// used up its kick budget.
    pub fn kick(&mut self, blocker: TrainId) -> bool {
        if self.completed_at[blocker.index()].is_none() || self.kick_count[blocker.index()] >= self.config.kick_limit {
            return false;
        }
        self.occ.remove_train(self.problem, blocker);
        self.completed_at[blocker.index()] = None;
        self.kick_count[blocker.index()] += 1;
        self.stack.push(blocker);
        true
    }

    fn place_node(&self, train: TrainId, pos: usize) -> RouteOutcome<T> {
        let p = self.problem;
        let tr = p.instance().train(train);
        let prev = pos.checked_sub(1).map(|q| *self.occ.assignment(train, q).expect("earlier node frozen"));
        let mut best: Option<Assignment<T>> = None;
        let mut blockers = Vec::new();
        for &route in p.admissible_routes(train, pos) {
            if let Some(prev) = prev {
                if route.incoming != prev.route.outgoing {
                    continue;
                }
            }
            let mut a = p.arrival_bound(train, pos);
            if let Some(prev) = prev {
                a = a.max(prev.departure.sat_add(tr.runs[pos - 1]));
            }
            let mut d = p.departure_bound(train, pos).max(a.sat_add(tr.stops[pos].min));
            let mut departure_cause: Option<TrainId> = None;
            let mut outcome = None;
            for _ in 0..self.config.iteration_cap {
                // Times only move forward: a route that cannot depart before
                // the current best (lower index wins ties) is settled.
                if best.is_some_and(|b| d >= b.departure) {
                    break;
                }
                let cand = Candidate { train, pos, arrival: a, departure: d, route, next_arrival: None };
                let Some(c) = first_conflict(p, &self.occ, &cand) else {
                    outcome = Some(RouteOutcome::Clean(Assignment { arrival: a, departure: d, route }));
                    break;
                };
                match c.clearing {
                    // Dwell too long: only reachable after pushing d, which
                    // cannot be absorbed at this node.
                    Some(Clearing::Arrival(_)) if c.kind == ConflictKind::Stop => {
                        outcome = Some(RouteOutcome::Blocked(departure_cause.into_iter().collect()));
                        break;
                    }
                    Some(Clearing::Arrival(t)) => a = a.max(t),
                    Some(Clearing::Departure(t)) => {
                        if c.blocker.is_some() {
                            departure_cause = c.blocker;
                        }
                        d = d.max(t);
                    }
                    None => {
                        outcome = Some(RouteOutcome::Blocked(c.blocker.into_iter().collect()));
                        break;
                    }
                }
            }
            match outcome {
                Some(RouteOutcome::Clean(asg)) => {
                    if best.is_none_or(|b| asg.departure < b.departure) {
                        best = Some(asg);
                    }
                }
                Some(RouteOutcome::Blocked(b)) => blockers.extend(b),
                None => {}
            }
        }
        match best {
            Some(a) => RouteOutcome::Clean(a),
            None => RouteOutcome::Blocked(blockers),
        }
    }

    /// Drain the stack, then assemble the result.
    pub fn run(mut self) -> ScheduleResult<T> {
        while let Some(train) = self.stack.pop() {
            if self.is_scheduled(train) {
                continue;
            }
            if self.insert_train(train) == InsertOutcome::Failed {
                self.unscheduled.insert(train);
            }
        }
        let n = self.problem.n_trains();
        let assignments: Vec<Option<Vec<Assignment<T>>>> = (0..n as u32)
            .map(TrainId)
            .map(|t| {
                if self.completed_at[t.index()].is_some() {
                    Some(self.occ.assignments(t).iter().map(|a| a.expect("placed")).collect())
                } else {
                    None
                }
            })
            .collect();
        let mut result = ScheduleResult {
            assignments,
            unscheduled: self.unscheduled,
            fitness: T::zero(),
            kick_count: self.kick_count,
            insertion_order: self.insertion_order,
        };
        result.fitness = evaluate_fitness(&result, self.problem, &self.config);
        result
    }
}

/// Decode `permutation` into a schedule. Infeasibility shows up only as
/// unscheduled trains and a penalised fitness.
pub fn schedule<T: TimeScalar>(
    problem: &PerturbedProblem<T>,
    permutation: &Permutation,
    config: &SchedulerConfig<T>,
) -> ScheduleResult<T> {
    debug_assert!(permutation.is_valid(problem.n_trains()));
    let mut state = DecodeState::new(problem, *config);
    state.stack.extend(permutation.0.iter().rev().copied());
    state.run()
}

/// Number of orders of `n` trains, saturating.
pub fn permutation_count(n: usize) -> u64 {
    (1..=n as u64).try_fold(1u64, |acc, k| acc.checked_mul(k)).unwrap_or(u64::MAX)
}

/// Lexicographic successor in place; `false` once `p` is the last order.
pub fn next_permutation(p: &mut [TrainId]) -> bool {
    let Some(i) = p.windows(2).rposition(|w| w[0] < w[1]) else { return false };
    let j = p.iter().rposition(|&x| x > p[i]).expect("successor exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Best fitness over every order, with the lexicographically first order
/// attaining it. `None` when there are more than `max_decodes` orders.
pub fn exhaustive_best<T: TimeScalar>(
    problem: &PerturbedProblem<T>,
    config: &SchedulerConfig<T>,
    max_decodes: u64,
) -> Option<(Permutation, T)> {
    let n = problem.n_trains();
    if permutation_count(n) > max_decodes {
        return None;
    }
    let mut p = Permutation::identity(n);
    let mut best = (p.clone(), schedule(problem, &p, config).fitness);
    while next_permutation(&mut p.0) {
        let f = schedule(problem, &p, config).fitness;
        if f < best.1 {
            best = (p.clone(), f);
        }
    }
    Some(best)
}
