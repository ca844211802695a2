//! Experiment harness for railopt: plans, statistics, reports and
//! space/time diagrams.

pub mod plan;
pub mod report;
pub mod stats;
pub mod svg;

pub use plan::{run_plan, ExperimentPlan, Manifest, RunOptions, RunSummary};
pub use report::{summarize, ComparisonReport};
pub use stats::wilcoxon_rank_sum;
pub use svg::emit_space_time;
