//! Train rescheduling after a single delay perturbation.
//!
//! The solver is a permutation-coded evolutionary algorithm: each genotype is
//! an insertion order, decoded by a semi-greedy scheduler into a feasible
//! (possibly partial) schedule whose fitness is the sum of arrival times plus
//! a penalty per train that could not be placed. Populations can be seeded
//! from an inoculant, the best order found for the unperturbed problem.
//!
//! Everything is generic over the clock type; the aliases below fix it to
//! `i64` seconds.

pub mod ea;
pub mod format;
pub mod inoculation;
pub mod instance_gen;
pub mod rail_model;
pub mod scheduler;
pub mod time;

pub use time::TimeScalar;

/// Default clock: signed seconds.
pub type Time = i64;

pub type Instance = rail_model::Instance<Time>;
pub type Problem = rail_model::PerturbedProblem<Time>;
pub type Perturbation = rail_model::Perturbation<Time>;
pub type Assignment = rail_model::Assignment<Time>;
pub type ScheduleResult = scheduler::ScheduleResult<Time>;
pub type SchedulerConfig = scheduler::SchedulerConfig<Time>;
pub type EAConfig = ea::EAConfig<f64>;
pub type RunTrace = ea::RunTrace<Time>;
pub type Inoculant = inoculation::Inoculant<Time>;
