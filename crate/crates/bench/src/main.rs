use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use railopt_bench::plan::{replay, run_plan, ExperimentPlan, PlanError, RunOptions, VariantSpec};
use railopt_bench::report::summarize;
use railopt_bench::svg::{default_path, emit_space_time, SpaceTimeOptions};
use railopt_core::format::{load_instance, parse_schedule, write_instance};
use railopt_core::inoculation::{cache_path, load_or_compute};
use railopt_core::instance_gen::{
    classify, generate, make_instance_pair, Difficulty, GeneratorParams, PerturbSite, Topology, CLASSIFY_SAMPLES,
};
use railopt_core::rail_model::{NodeId, TrainId};
use railopt_core::{Instance, Time};

#[derive(Parser)]
#[command(name = "railopt", version, about = "Train rescheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance and its metadata sidecar.
    Generate(GenerateArgs),
    /// Compute (or refresh) the cached inoculant of an instance.
    Inoculate(InoculateArgs),
    /// Run an experiment plan or replay a manifest.
    Run(RunArgs),
    /// Summarise a results directory.
    Report { dir: PathBuf },
    /// Draw a schedule as a space/time diagram.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator parameters as TOML; flags override them.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance file to write; metadata goes to `<out>.meta`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_trains: Option<usize>,
    #[arg(long)]
    n_nodes: Option<usize>,
    #[arg(long, value_parser = parse_topology)]
    topology: Option<Topology>,
    #[arg(long)]
    gate_density: Option<f64>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    delay: Option<Vec<i64>>,
    #[arg(long, value_parser = parse_site)]
    perturb_at: Option<PerturbSite>,
    #[arg(long)]
    max_hold: Option<i64>,
    #[arg(long)]
    violation_rate: Option<f64>,
    #[arg(long)]
    connection_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write `<stem>-easy` and `<stem>-hard` variants with these delays.
    #[arg(long, num_args = 2, value_names = ["EASY", "HARD"])]
    pair: Option<Vec<i64>>,
    /// Decodes the easy/hard classifier may spend; instances with at most
    /// this many orders are enumerated, larger ones sampled.
    #[arg(long, default_value_t = CLASSIFY_SAMPLES)]
    classify_budget: u64,
}

#[derive(Args)]
struct InoculateArgs {
    instance: PathBuf,
    /// Take the pre-solve settings from this plan.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    generations: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Recompute even when the cache is current.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Plan file; flags override its keys.
    #[arg(long, conflicts_with = "replay")]
    plan: Option<PathBuf>,
    /// Results directory whose manifest is replayed.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Replaces the plan's instance list.
    #[arg(long = "instance")]
    instances: Vec<PathBuf>,
    /// Comma-separated variant names; replaces the plan's list.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    generations: Option<u32>,
    #[arg(long)]
    time_budget_s: Option<f64>,
    #[arg(long)]
    mu: Option<usize>,
    #[arg(long)]
    offspring_per_parent: Option<usize>,
    #[arg(long)]
    kick_limit: Option<u32>,
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    no_svg: bool,
    /// Worker threads; 0 lets the pool decide.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct PlotArgs {
    instance: PathBuf,
    schedule: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated node ids; defaults to the longest itinerary.
    #[arg(long, value_delimiter = ',')]
    path: Vec<u32>,
    /// Comma-separated train ids; defaults to the perturbed train.
    #[arg(long, value_delimiter = ',')]
    highlight: Vec<u32>,
    #[arg(long)]
    title: Option<String>,
}

fn parse_topology(s: &str) -> Result<Topology, String> {
    match s {
        "line" | "line_with_junctions" => Ok(Topology::LineWithJunctions),
        "grid" => Ok(Topology::Grid),
        _ => Err(format!("unknown topology `{s}`")),
    }
}

fn parse_site(s: &str) -> Result<PerturbSite, String> {
    match s {
        "origin" => Ok(PerturbSite::Origin),
        "anywhere" => Ok(PerturbSite::Anywhere),
        _ => Err(format!("unknown perturbation site `{s}`")),
    }
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_instance(&text).with_context(|| format!("loading {}", path.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut p: GeneratorParams = match &a.config {
        Some(path) => toml::from_str(&fs::read_to_string(path)?).with_context(|| format!("parsing {}", path.display()))?,
        None => GeneratorParams::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { p.$f = v; })* };
    }
    set!(n_trains, n_nodes, topology, gate_density, density, perturb_at, max_hold, violation_rate, connection_rate, seed);
    if let Some(d) = &a.delay {
        p.delay = (d[0], d[1]);
    }
    let generated = generate::<Time>(&p)?;
    let meta = generated.metadata.to_text();
    let difficulty = write_with_meta(&a.out, &generated.instance, &meta, a.classify_budget)?;
    println!("{}: {} trains, {difficulty}", a.out.display(), generated.instance.n_trains());
    if let Some(d) = &a.pair {
        let (easy, hard) = make_instance_pair(&generated.instance, d[0], d[1])?;
        for (inst, suffix) in [(easy, "-easy"), (hard, "-hard")] {
            let path = sibling(&a.out, suffix);
            let p = inst.perturbation.expect("pairs keep the perturbation");
            let meta = format!("{meta}pair-of {}\ndelay {} {} {}\n", a.out.display(), p.train.0, p.node.0, p.delay);
            let difficulty = write_with_meta(&path, &inst, &meta, a.classify_budget)?;
            println!("{}: {difficulty}", path.display());
        }
    }
    Ok(())
}

/// Write `inst` to `path` and `<path>.meta` with `meta` plus a label line.
fn write_with_meta(path: &Path, inst: &Instance, meta: &str, budget: u64) -> Result<&'static str> {
    let label = classify(inst, budget)?;
    let difficulty = match label.difficulty {
        Difficulty::Easy => "easy",
        Difficulty::Hard => "hard",
        Difficulty::Unknown => "unknown",
    };
    let mut meta = format!("{meta}label {difficulty} identity {}", label.identity_fitness);
    if let Some(r) = label.reference {
        meta.push_str(&format!(" reference {r}"));
    }
    meta.push('\n');
    fs::write(path, write_instance(inst))?;
    let mut meta_path = path.to_owned().into_os_string();
    meta_path.push(".meta");
    fs::write(meta_path, meta)?;
    Ok(difficulty)
}

fn cmd_inoculate(a: InoculateArgs) -> Result<()> {
    let mut plan = match &a.plan {
        Some(p) => ExperimentPlan::from_toml(&fs::read_to_string(p)?)?,
        None => ExperimentPlan::default(),
    };
    if let Some(g) = a.generations {
        plan.inoculation.generations = g;
    }
    if let Some(s) = a.seed {
        plan.inoculation.seed = s;
    }
    let instance = read_instance(&a.instance)?;
    let empty = instance.with_perturbation(None).problem()?;
    if a.force {
        let _ = fs::remove_file(cache_path(&a.instance));
    }
    let ino = load_or_compute(&a.instance, &empty, &plan.inoculation_config(), &plan.scheduler_config(&empty))?;
    println!("{}: fitness {}", cache_path(&a.instance).display(), ino.provenance.fitness);
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let options = RunOptions { threads: a.threads };
    let summary = if let Some(dir) = &a.replay {
        replay(dir, &a.out, options)
    } else {
        let mut plan = match &a.plan {
            Some(p) => ExperimentPlan::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
            None => ExperimentPlan::default(),
        };
        if !a.instances.is_empty() {
            plan.instances = a.instances.clone();
        }
        if !a.variants.is_empty() {
            plan.variants = a.variants.iter().map(|v| VariantSpec::named(v)).collect();
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = a.$f { plan.$f = v; })* };
        }
        set!(runs, seed, generations, mu, offspring_per_parent);
        if a.time_budget_s.is_some() {
            plan.time_budget_s = a.time_budget_s;
        }
        if a.kick_limit.is_some() {
            plan.kick_limit = a.kick_limit;
        }
        plan.timing |= a.timing;
        plan.svg &= !a.no_svg;
        run_plan(&plan, &a.out, options)
    };
    match summary {
        Ok(s) => {
            println!("{} runs completed, {} failed; results in {}", s.completed, s.failed, a.out.display());
            Ok(if s.failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Err(e @ (PlanError::Invalid(_) | PlanError::Toml(_) | PlanError::Instance { .. })) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_report(dir: &Path) -> Result<()> {
    let report = summarize(dir)?;
    report.write(dir)?;
    print!("{}", report.text());
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let instance = read_instance(&a.instance)?;
    let text = fs::read_to_string(&a.schedule)?;
    let doc = parse_schedule(&instance, &text).with_context(|| format!("loading {}", a.schedule.display()))?;
    let path: Vec<NodeId> = if a.path.is_empty() { default_path(&instance) } else { a.path.iter().map(|&n| NodeId(n)).collect() };
    if let Some(bad) = path.iter().find(|n| n.index() >= instance.network.nodes.len()) {
        bail!("node {bad} is not in the network");
    }
    let highlight = if a.highlight.is_empty() {
        instance.perturbation.iter().map(|p| p.train).collect()
    } else {
        a.highlight.iter().map(|&t| TrainId(t)).collect()
    };
    let options = SpaceTimeOptions { highlight, title: a.title, ..SpaceTimeOptions::default() };
    fs::write(&a.out, emit_space_time(&instance, &doc.assignments, &path, &options))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a).map(|()| ExitCode::SUCCESS),
        Command::Inoculate(a) => cmd_inoculate(a).map(|()| ExitCode::SUCCESS),
        Command::Run(a) => cmd_run(a),
        Command::Report { dir } => cmd_report(&dir).map(|()| ExitCode::SUCCESS),
        Command::Plot(a) => cmd_plot(a).map(|()| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
