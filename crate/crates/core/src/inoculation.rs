//! Inoculated initial populations.
//!
//! The inoculant `I0` is the best order found for the instance with the
//! delay removed. Populations are then built around it by perturbing copies
//! with `pR` random transpositions (`I0 + pR`): all with the same `pR`
//! (mass mutation), with a linearly growing `pR` (gradual perturbation), or
//! in percentage layers with their own `pR` each.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ea::{evolve, substream, EAConfig, EaError};
use crate::format::write_instance;
use crate::rail_model::{Instance, PerturbedProblem, TrainId};
use crate::scheduler::{Permutation, SchedulerConfig};
use crate::time::TimeScalar;

/// `pR` that stands for a completely shuffled layer.
pub const RANDOM_PR: u64 = 500;

pub const INOCULANT_HEADER: &str = "# railopt-inoculant 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance<T> {
    /// SHA-256 of the canonical instance text without its perturbation.
    pub instance_hash: String,
    pub config_hash: String,
    pub generations: u32,
    pub fitness: T,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inoculant<T> {
    pub permutation: Permutation,
    pub provenance: Provenance<T>,
}

#[derive(Debug, Error)]
pub enum InoculationError {
    #[error("the inoculant is computed on the undelayed problem, got a delay of {0}")]
    Perturbed(String),
    #[error(transparent)]
    Ea(#[from] EaError),
    #[error("invalid scheme: {0}")]
    Scheme(String),
    #[error("malformed inoculant file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layer {
    /// Share of the population, in percent.
    pub percent: u32,
    pub pr: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitScheme {
    MassMutation { pr: u64 },
    GradualPerturbation { pr0: u64, inc: u64 },
    Layers(Vec<Layer>),
}

impl InitScheme {
    /// Three layers: clones, mildly perturbed, random.
    pub fn three_layers() -> Self {
        Self::Layers(vec![Layer { percent: 33, pr: 0 }, Layer { percent: 33, pr: 10 }, Layer { percent: 33, pr: RANDOM_PR }])
    }

    /// Two layers: lightly perturbed and random.
    pub fn two_layers() -> Self {
        Self::Layers(vec![Layer { percent: 50, pr: 3 }, Layer { percent: 50, pr: RANDOM_PR }])
    }

    /// Shares must add up to 100; 99 is accepted so that thirds can be
    /// written as 33/33/33.
    pub fn validate(&self) -> Result<(), InoculationError> {
        if let Self::Layers(layers) = self {
            let total: u32 = layers.iter().map(|l| l.percent).sum();
            if layers.is_empty() || !(99..=100).contains(&total) {
                return Err(InoculationError::Scheme(format!("layer shares add up to {total}, expected 100")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MassMutation { pr } => write!(f, "mm:{pr}"),
            Self::GradualPerturbation { pr0, inc } => write!(f, "gper:{pr0}:{inc}"),
            Self::Layers(layers) => {
                f.write_str("layers:")?;
                for (k, l) in layers.iter().enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{}/{}", l.percent, l.pr)?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for InitScheme {
    type Err = InoculationError;

    /// `mm:3`, `gper:0:1`, `layers:50/3,50/500`, `h` or `t`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InoculationError::Scheme(format!("cannot parse `{s}`"));
        let num = |v: &str| v.trim().parse::<u64>().map_err(|_| bad());
        let scheme = match s.trim().split_once(':') {
            None if s.eq_ignore_ascii_case("h") => Self::two_layers(),
            None if s.eq_ignore_ascii_case("t") => Self::three_layers(),
            Some(("mm", pr)) => Self::MassMutation { pr: num(pr)? },
            Some(("gper", rest)) => {
                let (a, b) = rest.split_once(':').ok_or_else(bad)?;
                Self::GradualPerturbation { pr0: num(a)?, inc: num(b)? }
            }
            Some(("layers", rest)) => Self::Layers(
                rest.split(',')
                    .map(|l| {
                        let (x, pr) = l.split_once('/').ok_or_else(bad)?;
                        Ok(Layer { percent: num(x)? as u32, pr: num(pr)? })
                    })
                    .collect::<Result<_, InoculationError>>()?,
            ),
            _ => return Err(bad()),
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

/// Transposition count actually used for `pr` on `n` trains: the random
/// layer value is capped at `10 n`, which already shuffles small instances.
pub fn effective_pr(pr: u64, n: usize) -> u64 {
    if pr >= RANDOM_PR {
        pr.min(10 * n as u64)
    } else {
        pr
    }
}

/// `I0 + pR`: a copy of `i0` after `pr` transpositions of uniformly drawn
/// distinct positions.
pub fn perturb<R: Rng + ?Sized>(i0: &Permutation, pr: u64, rng: &mut R) -> Permutation {
    let mut out = i0.clone();
    let n = out.0.len();
    if n < 2 {
        return out;
    }
    for _ in 0..pr {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        out.0.swap(i, j);
    }
    out
}

/// Build `size` individuals around `i0`.
pub fn init_population<R: Rng + ?Sized>(
    i0: &Permutation,
    scheme: &InitScheme,
    size: usize,
    rng: &mut R,
) -> Result<Vec<Permutation>, InoculationError> {
    if size == 0 {
        return Err(InoculationError::Scheme("population size must be at least 1".into()));
    }
    scheme.validate()?;
    let n = i0.len();
    let pop = match scheme {
        InitScheme::MassMutation { pr } => {
            let pr = effective_pr(*pr, n);
            (0..size).map(|_| perturb(i0, pr, rng)).collect()
        }
        InitScheme::GradualPerturbation { pr0, inc } => (0..size as u64)
            .map(|k| perturb(i0, effective_pr(pr0 + k * inc, n), rng))
            .collect(),
        InitScheme::Layers(layers) => {
            let total: u64 = layers.iter().map(|l| l.percent as u64).sum();
            let mut sizes: Vec<usize> =
                layers.iter().map(|l| (l.percent as u64 * size as u64 / total) as usize).collect();
            let assigned: usize = sizes.iter().sum();
            *sizes.last_mut().expect("validated non-empty") += size - assigned;
            layers
                .iter()
                .zip(sizes)
                .flat_map(|(l, k)| std::iter::repeat_n(effective_pr(l.pr, n), k))
                .map(|pr| perturb(i0, pr, rng))
                .collect()
        }
    };
    Ok(pop)
}

/// `size` uniformly random orders of `n` trains.
pub fn init_random<R: Rng + ?Sized>(size: usize, n: usize, rng: &mut R) -> Vec<Permutation> {
    (0..size)
        .map(|_| {
            let mut p = Permutation::identity(n);
            p.0.shuffle(rng);
            p
        })
        .collect()
}

fn hex(digest: impl AsRef<[u8]>) -> String {
    digest.as_ref().iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the instance with its perturbation stripped.
pub fn instance_hash<T: TimeScalar>(instance: &Instance<T>) -> String {
    hex(Sha256::digest(write_instance(&instance.with_perturbation(None)).as_bytes()))
}

pub fn config_hash<T: TimeScalar, F: Float + fmt::Debug>(ea: &EAConfig<F>, scheduler: &SchedulerConfig<T>) -> String {
    hex(Sha256::digest(format!("{ea:?}\n{scheduler:?}").as_bytes()))
}

const INIT_TAG: u64 = 0x696e_6974;

/// Run the evolutionary loop on the undelayed problem from a random population.
///
/// A result that still leaves trains unscheduled is returned with a warning.
pub fn compute_inoculant<T: TimeScalar, F: Float + Sync + fmt::Debug>(
    problem: &PerturbedProblem<T>,
    ea: &EAConfig<F>,
    scheduler: &SchedulerConfig<T>,
) -> Result<Inoculant<T>, InoculationError> {
    if let Some(p) = problem.perturbation().filter(|p| p.delay != T::zero()) {
        return Err(InoculationError::Perturbed(p.delay.to_string()));
    }
    let mut rng = substream(ea.seed, INIT_TAG, 0, 0);
    let initial = init_random(ea.mu, problem.n_trains(), &mut rng);
    let trace = evolve(problem, &initial, ea, scheduler)?;
    if !trace.best_result.unscheduled.is_empty() {
        log::warn!(
            "inoculant leaves {} train(s) unscheduled on the undelayed problem",
            trace.best_result.unscheduled.len()
        );
    }
    Ok(Inoculant {
        permutation: trace.best.clone(),
        provenance: Provenance {
            instance_hash: instance_hash(problem.instance()),
            config_hash: config_hash(ea, scheduler),
            generations: trace.final_record().generation,
            fitness: trace.best_fitness(),
        },
    })
}

impl<T: TimeScalar> Inoculant<T> {
    pub fn to_text(&self) -> String {
        let p = &self.provenance;
        let ids: Vec<String> = self.permutation.0.iter().map(|t| t.0.to_string()).collect();
        format!(
            "{INOCULANT_HEADER}\n# instance_hash {}\n# config_hash {}\n# generations {}\n# fitness {}\n{}\n",
            p.instance_hash,
            p.config_hash,
            p.generations,
            p.fitness,
            ids.join(" ")
        )
    }

    pub fn parse(text: &str) -> Result<Self, InoculationError> {
        let bad = |m: &str| InoculationError::Parse(m.to_owned());
        let mut lines = text.lines();
        if lines.next() != Some(INOCULANT_HEADER) {
            return Err(bad("missing header"));
        }
        let mut field = |key: &str| -> Result<String, InoculationError> {
            let line = lines.next().ok_or_else(|| bad("truncated provenance"))?;
            line.strip_prefix("# ")
                .and_then(|l| l.strip_prefix(key))
                .and_then(|l| l.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| InoculationError::Parse(format!("expected `{key}`")))
        };
        let instance_hash = field("instance_hash")?;
        let config_hash = field("config_hash")?;
        let generations = field("generations")?.parse().map_err(|_| bad("bad generation count"))?;
        let fitness = field("fitness")?.parse().map_err(|_| bad("bad fitness"))?;
        let permutation = Permutation(
            lines
                .flat_map(str::split_whitespace)
                .map(|w| w.parse().map(TrainId).map_err(|_| bad("bad train id")))
                .collect::<Result<_, _>>()?,
        );
        if !permutation.is_valid(permutation.len()) {
            return Err(bad("ids are not a permutation"));
        }
        Ok(Self { permutation, provenance: Provenance { instance_hash, config_hash, generations, fitness } })
    }
}

/// Cache location beside `instance_path`.
pub fn cache_path(instance_path: &Path) -> PathBuf {
    let mut name = instance_path.file_name().unwrap_or_default().to_os_string();
    name.push(".inoculant");
    instance_path.with_file_name(name)
}

/// Load the cached inoculant beside `instance_path` when its hashes match
/// the instance and configuration, otherwise compute and store a fresh one.
pub fn load_or_compute<T: TimeScalar, F: Float + Sync + fmt::Debug>(
    instance_path: &Path,
    problem: &PerturbedProblem<T>,
    ea: &EAConfig<F>,
    scheduler: &SchedulerConfig<T>,
) -> Result<Inoculant<T>, InoculationError> {
    let path = cache_path(instance_path);
    let want_instance = instance_hash(problem.instance());
    let want_config = config_hash(ea, scheduler);
    match fs::read_to_string(&path) {
        Ok(text) => match Inoculant::<T>::parse(&text) {
            Ok(i)
                if i.provenance.instance_hash == want_instance
                    && i.provenance.config_hash == want_config
                    && i.permutation.is_valid(problem.n_trains()) =>
            {
                return Ok(i);
            }
            Ok(_) => log::warn!("{}: stale inoculant cache, recomputing", path.display()),
            Err(e) => log::warn!("{}: {e}, recomputing", path.display()),
        },
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(e.into()),
    }
    let inoculant = compute_inoculant(problem, ea, scheduler)?;
    fs::write(&path, inoculant.to_text())?;
    Ok(inoculant)
}
