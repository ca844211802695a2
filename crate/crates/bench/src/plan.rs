//! Experiment plans and their execution.
//!
//! A plan crosses instances with algorithmic variants and runs each cell a
//! fixed number of times. Every run writes into
//! `<out>/<instance>/<variant>/run_<k>/`; `manifest.toml` at the top records
//! the resolved plan, the hashes of every instance and configuration, and the
//! outcome of each cell, so that a replay regenerates the same bytes.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use railopt_core::ea::{
    evolve, substream, AnnealParams, EAConfig, Replacement, RunTrace, TemperatureSchedule,
};
use railopt_core::format::{load_instance, write_schedule};
use railopt_core::inoculation::{
    config_hash, init_population, init_random, instance_hash, load_or_compute, InitScheme, Inoculant,
};
use railopt_core::rail_model::{Instance, PerturbedProblem};
use railopt_core::scheduler::SchedulerConfig;
use railopt_core::Time;

use crate::svg::{default_path, emit_space_time, SpaceTimeOptions};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MANIFEST_VERSION: u32 = 1;
pub const TIMING_CSV_HEADER: &str = "generation,elapsed_s";

/// Stream tag for initial populations, distinct from the ones used inside
/// the evolutionary loop.
const POPULATION_TAG: u64 = 0x706f_70;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Instance { path: PathBuf, message: String },
    #[error("cannot parse plan: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How the initial population of a variant is built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitSpec {
    /// Uniform random permutations, no inoculant.
    Random,
    Inoculated(InitScheme),
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Random => f.write_str("random"),
            Self::Inoculated(s) => s.fmt(f),
        }
    }
}

impl FromStr for InitSpec {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("random") {
            return Ok(Self::Random);
        }
        s.parse().map(Self::Inoculated).map_err(|e| PlanError::Invalid(e.to_string()))
    }
}

/// Mutation strength: `const:4` and `anneal:3:50:4:0.2` draw the count from
/// the binomial law, the `fixed:` and `anneal-fixed:` forms use it as is.
pub fn parse_temperature(s: &str) -> Result<TemperatureSchedule<f64>, PlanError> {
    let bad = || PlanError::Invalid(format!("cannot parse mutation strength `{s}`"));
    let nums = |rest: &str| -> Result<Vec<f64>, PlanError> {
        rest.split(':').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect()
    };
    let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
    let v = nums(rest)?;
    let binomial = !kind.ends_with("fixed");
    match (kind, v.as_slice()) {
        ("const" | "fixed", &[t]) => Ok(TemperatureSchedule::Constant { t, binomial }),
        ("anneal" | "anneal-fixed", &[n0, t0, t_inf, gamma]) if n0 >= 0.0 && n0.fract() == 0.0 => {
            Ok(TemperatureSchedule::Annealed { params: AnnealParams { n0: n0 as u32, t0, t_inf, gamma }, binomial })
        }
        _ => Err(bad()),
    }
}

pub fn format_temperature(t: &TemperatureSchedule<f64>) -> String {
    match t {
        TemperatureSchedule::Constant { t, binomial } => {
            format!("{}:{t}", if *binomial { "const" } else { "fixed" })
        }
        TemperatureSchedule::Annealed { params: p, binomial } => format!(
            "{}:{}:{}:{}:{}",
            if *binomial { "anneal" } else { "anneal-fixed" },
            p.n0,
            p.t0,
            p.t_inf,
            p.gamma
        ),
    }
}

/// `plus` or `ept:S`.
pub fn parse_replacement(s: &str) -> Result<Replacement, PlanError> {
    match s.trim().split_once(':') {
        None if s.trim() == "plus" => Ok(Replacement::Plus),
        Some(("ept", n)) => n
            .trim()
            .parse()
            .map(|opponents| Replacement::Ept { opponents })
            .map_err(|_| PlanError::Invalid(format!("cannot parse replacement `{s}`"))),
        _ => Err(PlanError::Invalid(format!("cannot parse replacement `{s}`"))),
    }
}

pub fn format_replacement(r: &Replacement) -> String {
    match r {
        Replacement::Plus => "plus".into(),
        Replacement::Ept { opponents } => format!("ept:{opponents}"),
    }
}

/// Tournament size used by the layer presets.
pub const PRESET_OPPONENTS: usize = 10;

/// One variant as written in a plan file. Unset fields come from the preset of
/// the same name when there is one, otherwise from MM.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
}

impl VariantSpec {
    pub fn named(name: &str) -> Self {
        Self { name: name.into(), ..Self::default() }
    }
}

/// Resolved variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub init: InitSpec,
    pub temperature: TemperatureSchedule<f64>,
    pub replacement: Replacement,
    pub radius: Option<usize>,
}

/// Names of the built-in variants.
pub const PRESET_NAMES: [&str; 8] = ["MM", "GPer", "R", "H", "T", "H+R", "T+R", "Random"];

/// Built-in variant `name`, if any.
pub fn preset(name: &str) -> Option<Variant> {
    let constant = TemperatureSchedule::Constant { t: 4.0, binomial: true };
    let annealed = TemperatureSchedule::Annealed {
        params: AnnealParams { n0: 3, t0: 50.0, t_inf: 4.0, gamma: 0.2 },
        binomial: false,
    };
    let ept = Replacement::Ept { opponents: PRESET_OPPONENTS };
    let (init, temperature, replacement) = match name {
        "MM" => (InitSpec::Inoculated(InitScheme::MassMutation { pr: 3 }), constant, Replacement::Plus),
        "GPer" => (InitSpec::Inoculated(InitScheme::GradualPerturbation { pr0: 0, inc: 1 }), constant, Replacement::Plus),
        "R" => (InitSpec::Inoculated(InitScheme::MassMutation { pr: 3 }), annealed, Replacement::Plus),
        "H" => (InitSpec::Inoculated(InitScheme::two_layers()), constant, ept),
        "T" => (InitSpec::Inoculated(InitScheme::three_layers()), constant, ept),
        "H+R" => (InitSpec::Inoculated(InitScheme::two_layers()), annealed, ept),
        "T+R" => (InitSpec::Inoculated(InitScheme::three_layers()), annealed, ept),
        "Random" => (InitSpec::Random, constant, Replacement::Plus),
        _ => return None,
    };
    Some(Variant { name: name.into(), init, temperature, replacement, radius: None })
}

impl VariantSpec {
    pub fn resolve(&self) -> Result<Variant, PlanError> {
        let custom = self.init.is_some() || self.mutation.is_some() || self.replacement.is_some() || self.radius.is_some();
        let mut v = match preset(&self.name) {
            Some(v) => v,
            // Custom variants start from MM.
            None if custom => Variant { name: self.name.clone(), ..preset("MM").expect("MM preset") },
            None => {
                return Err(PlanError::Invalid(format!(
                    "`{}` is not a preset ({}) and sets no fields",
                    self.name,
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        if let Some(s) = &self.init {
            v.init = s.parse()?;
        }
        if let Some(s) = &self.mutation {
            v.temperature = parse_temperature(s)?;
        }
        if let Some(s) = &self.replacement {
            v.replacement = parse_replacement(s)?;
        }
        if self.radius.is_some() {
            v.radius = self.radius;
        }
        Ok(v)
    }
}

impl Variant {
    /// Fully spelled-out spec, as stored in manifests.
    pub fn to_spec(&self) -> VariantSpec {
        VariantSpec {
            name: self.name.clone(),
            init: Some(self.init.to_string()),
            mutation: Some(format_temperature(&self.temperature)),
            replacement: Some(format_replacement(&self.replacement)),
            radius: self.radius,
        }
    }
}

fn default_runs() -> usize {
    11
}
fn default_generations() -> u32 {
    100
}
fn default_mu() -> usize {
    10
}
fn default_offspring() -> usize {
    7
}

/// Settings of the pre-solve that produces each instance's inoculant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InoculationSettings {
    #[serde(default = "default_generations")]
    pub generations: u32,
    #[serde(default)]
    pub seed: u64,
}

impl Default for InoculationSettings {
    fn default() -> Self {
        Self { generations: default_generations(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub instances: Vec<PathBuf>,
    pub variants: Vec<VariantSpec>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Run `k` uses seed `seed + k`, shared by all variants.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_generations")]
    pub generations: u32,
    /// Per-run wall-clock cap in seconds. Capped runs are not reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget_s: Option<f64>,
    #[serde(default = "default_mu")]
    pub mu: usize,
    #[serde(default = "default_offspring")]
    pub offspring_per_parent: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kick_limit: Option<u32>,
    /// Write `timing.csv` (wall-clock seconds per generation) beside each trace.
    #[serde(default)]
    pub timing: bool,
    /// Draw every run's space/time diagram.
    #[serde(default = "yes")]
    pub svg: bool,
    #[serde(default)]
    pub inoculation: InoculationSettings,
}

fn yes() -> bool {
    true
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            instances: Vec::new(),
            variants: Vec::new(),
            runs: default_runs(),
            seed: 0,
            generations: default_generations(),
            time_budget_s: None,
            mu: default_mu(),
            offspring_per_parent: default_offspring(),
            kick_limit: None,
            timing: false,
            svg: true,
            inoculation: InoculationSettings::default(),
        }
    }
}

/// Keeps names usable as directory names.
fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || "+-_.".contains(c) { c } else { '_' }).collect()
}

/// Directory label of an instance: its file stem.
pub fn instance_label(path: &Path) -> String {
    slug(&path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "instance".into()))
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self, PlanError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plans serialise")
    }

    pub fn resolved_variants(&self) -> Result<Vec<Variant>, PlanError> {
        self.variants.iter().map(VariantSpec::resolve).collect()
    }

    /// Structural checks; instance files are checked by [`run_plan`].
    pub fn validate(&self) -> Result<Vec<Variant>, PlanError> {
        let bad = |m: String| Err(PlanError::Invalid(m));
        if self.runs == 0 {
            return bad("at least one run per variant".into());
        }
        if self.instances.is_empty() || self.variants.is_empty() {
            return bad("a plan needs at least one instance and one variant".into());
        }
        if let Some(b) = self.time_budget_s {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("time budget {b} is not a positive number of seconds"));
            }
        }
        let mut labels = BTreeSet::new();
        for p in &self.instances {
            if !labels.insert(instance_label(p)) {
                return bad(format!("two instances share the label `{}`", instance_label(p)));
            }
        }
        let variants = self.resolved_variants()?;
        let mut names = BTreeSet::new();
        for v in &variants {
            if !names.insert(slug(&v.name)) {
                return bad(format!("duplicate variant `{}`", v.name));
            }
            self.ea_config(v, 0).validate().map_err(|e| PlanError::Invalid(format!("{}: {e}", v.name)))?;
        }
        Ok(variants)
    }

    pub fn ea_config(&self, variant: &Variant, seed: u64) -> EAConfig<f64> {
        EAConfig {
            mu: self.mu,
            lambda: self.mu * self.offspring_per_parent,
            offspring_per_parent: self.offspring_per_parent,
            replacement: variant.replacement,
            radius: variant.radius,
            temperature: variant.temperature,
            generations: self.generations,
            seed,
            time_budget: self.time_budget_s.map(Duration::from_secs_f64),
        }
    }

    pub fn inoculation_config(&self) -> EAConfig<f64> {
        EAConfig {
            mu: self.mu,
            lambda: self.mu * self.offspring_per_parent,
            offspring_per_parent: self.offspring_per_parent,
            generations: self.inoculation.generations,
            seed: self.inoculation.seed,
            ..EAConfig::default()
        }
    }

    pub fn scheduler_config(&self, problem: &PerturbedProblem<Time>) -> SchedulerConfig<Time> {
        let c = SchedulerConfig::for_problem(problem);
        match self.kick_limit {
            Some(k) => c.with_kick_limit(k),
            None => c,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.instances.len() * self.variants.len() * self.runs
    }
}

/// One (instance, variant, run) cell in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub instance: String,
    pub variant: String,
    pub run: usize,
    pub seed: u64,
    pub config_hash: String,
    /// Output directory relative to the manifest.
    pub dir: String,
    /// `ok` or the error that stopped the run.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_fitness: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub label: String,
    pub path: PathBuf,
    pub hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inoculant_fitness: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// The plan with every variant spelled out.
    pub plan: ExperimentPlan,
    pub instances: Vec<InstanceRecord>,
    pub cells: Vec<CellRecord>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, PlanError> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: Self = toml::from_str(&text)?;
        if m.version != MANIFEST_VERSION {
            return Err(PlanError::Invalid(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifests serialise")
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.status != "ok").count()
    }
}

/// Result of one cell, in memory.
struct CellOutput {
    record: CellRecord,
}

struct LoadedInstance {
    label: String,
    path: PathBuf,
    instance: Instance<Time>,
    problem: PerturbedProblem<Time>,
    inoculant: Option<Inoculant<Time>>,
}

fn load(path: &Path) -> Result<(Instance<Time>, PerturbedProblem<Time>), PlanError> {
    let err = |m: String| PlanError::Instance { path: path.to_owned(), message: m };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let instance = load_instance::<Time>(&text).map_err(|e| err(e.to_string()))?;
    let problem = instance.problem().map_err(|e| err(e.to_string()))?;
    Ok((instance, problem))
}

impl LoadedInstance {
    fn open(path: &Path, plan: &ExperimentPlan, needs_inoculant: bool) -> Result<Self, PlanError> {
        let (instance, problem) = load(path)?;
        let inoculant = if needs_inoculant {
            let empty = instance.with_perturbation(None).problem().map_err(|e| PlanError::Instance {
                path: path.to_owned(),
                message: e.to_string(),
            })?;
            let sched = plan.scheduler_config(&empty);
            let ino = load_or_compute(path, &empty, &plan.inoculation_config(), &sched)
                .map_err(|e| PlanError::Instance { path: path.to_owned(), message: e.to_string() })?;
            Some(ino)
        } else {
            None
        };
        Ok(Self { label: instance_label(path), path: path.to_owned(), instance, problem, inoculant })
    }
}

/// Counts from a finished plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub completed: usize,
    pub failed: usize,
}

/// Options that do not change what is computed.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads for the cells; 0 uses rayon's default.
    pub threads: usize,
}

/// Execute every cell of `plan`, writing results under `out`.
///
/// Instance or plan problems fail the whole call; a failing cell is logged,
/// recorded in the manifest and does not stop the others.
pub fn run_plan(plan: &ExperimentPlan, out: &Path, options: RunOptions) -> Result<RunSummary, PlanError> {
    let variants = plan.validate()?;
    let needs_inoculant = variants.iter().any(|v| v.init != InitSpec::Random);
    let instances: Vec<LoadedInstance> = plan
        .instances
        .iter()
        .map(|p| LoadedInstance::open(p, plan, needs_inoculant))
        .collect::<Result<_, _>>()?;
    fs::create_dir_all(out)?;

    let cells: Vec<(usize, usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..variants.len()).flat_map(move |v| (0..plan.runs).map(move |k| (i, v, k))))
        .collect();
    let work = || -> Vec<CellOutput> {
        cells.par_iter().map(|&(i, v, k)| run_cell(plan, &instances[i], &variants[v], k, out)).collect()
    };
    let outputs = if options.threads == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| PlanError::Invalid(e.to_string()))?
            .install(work)
    };

    let mut resolved = plan.clone();
    resolved.variants = variants.iter().map(Variant::to_spec).collect();
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        plan: resolved,
        instances: instances
            .iter()
            .map(|l| InstanceRecord {
                label: l.label.clone(),
                path: l.path.clone(),
                hash: instance_hash(&l.instance),
                inoculant_fitness: l.inoculant.as_ref().map(|i| i.provenance.fitness),
            })
            .collect(),
        cells: outputs.into_iter().map(|c| c.record).collect(),
    };
    fs::write(out.join(MANIFEST_FILE), manifest.to_toml())?;
    let failed = manifest.failures();
    Ok(RunSummary { completed: manifest.cells.len() - failed, failed })
}

/// Rerun the plan stored in the manifest under `manifest_dir`, into `out`.
pub fn replay(manifest_dir: &Path, out: &Path, options: RunOptions) -> Result<RunSummary, PlanError> {
    let m = Manifest::load(manifest_dir)?;
    for rec in &m.instances {
        let (instance, _) = load(&rec.path)?;
        if instance_hash(&instance) != rec.hash {
            return Err(PlanError::Instance { path: rec.path.clone(), message: "instance changed since the manifest was written".into() });
        }
    }
    run_plan(&m.plan, out, options)
}

fn run_cell(plan: &ExperimentPlan, inst: &LoadedInstance, variant: &Variant, k: usize, out: &Path) -> CellOutput {
    let seed = plan.seed.wrapping_add(k as u64);
    let ea = plan.ea_config(variant, seed);
    let sched = plan.scheduler_config(&inst.problem);
    let rel = format!("{}/{}/run_{k}", inst.label, slug(&variant.name));
    let mut record = CellRecord {
        instance: inst.label.clone(),
        variant: variant.name.clone(),
        run: k,
        seed,
        config_hash: config_hash(&ea, &sched),
        dir: rel.clone(),
        status: "ok".into(),
        final_fitness: None,
    };
    match execute(plan, inst, variant, &ea, &sched, &out.join(&rel)) {
        Ok(trace) => record.final_fitness = Some(trace.best_fitness()),
        Err(e) => {
            log::error!("{} / {} / run {k}: {e}", inst.label, variant.name);
            record.status = e;
        }
    }
    CellOutput { record }
}

fn execute(
    plan: &ExperimentPlan,
    inst: &LoadedInstance,
    variant: &Variant,
    ea: &EAConfig<f64>,
    sched: &SchedulerConfig<Time>,
    dir: &Path,
) -> Result<RunTrace<Time>, String> {
    let n = inst.problem.n_trains();
    let mut rng = substream(ea.seed, POPULATION_TAG, 0, 0);
    let initial = match &variant.init {
        InitSpec::Random => init_random(ea.mu, n, &mut rng),
        InitSpec::Inoculated(scheme) => {
            let i0 = &inst.inoculant.as_ref().ok_or("no inoculant available")?.permutation;
            init_population(i0, scheme, ea.mu, &mut rng).map_err(|e| e.to_string())?
        }
    };
    let started = Instant::now();
    let trace = evolve(&inst.problem, &initial, ea, sched).map_err(|e| e.to_string())?;
    log::info!(
        "{} / {} / seed {}: best {} after {} generations in {:.1}s",
        inst.label,
        variant.name,
        ea.seed,
        trace.best_fitness(),
        trace.final_record().generation,
        started.elapsed().as_secs_f64()
    );
    write_run(plan, inst, &trace, dir).map_err(|e| format!("writing results: {e}"))?;
    Ok(trace)
}

fn write_run(plan: &ExperimentPlan, inst: &LoadedInstance, trace: &RunTrace<Time>, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv, false)?;
    fs::write(dir.join("trace.csv"), csv)?;
    fs::write(dir.join("schedule.txt"), write_schedule(&inst.instance, &trace.best_result))?;
    if plan.svg {
        let options = SpaceTimeOptions {
            highlight: inst.instance.perturbation.iter().map(|p| p.train).collect(),
            title: Some(format!("{} fitness {}", inst.label, trace.best_fitness())),
            ..SpaceTimeOptions::default()
        };
        let svg = emit_space_time(&inst.instance, &trace.best_result.assignments, &default_path(&inst.instance), &options);
        fs::write(dir.join("schedule.svg"), svg)?;
    }
    if plan.timing {
        let mut t = format!("{TIMING_CSV_HEADER}\n");
        for r in &trace.records {
            t.push_str(&format!("{},{:.6}\n", r.generation, r.elapsed_s));
        }
        fs::write(dir.join("timing.csv"), t)?;
    }
    Ok(())
}
