//! Synthetic instances.
//!
//! A main corridor with short branch lines hanging off interior nodes (or a
//! grid, behind [`Topology::Grid`]). Trains run between terminals along the
//! unique corridor path; their wished start times are spread over a window
//! whose length follows the traffic density, and the timetable is obtained by
//! decoding the wishes in start order, so it is conflict free by
//! construction. Minor spacing violations are then injected by raising the
//! pairwise `gamma` of consecutive visits of one in-node track above their
//! actual gap. Train ids follow timetable departure order.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rail_model::{
    Connection, Edge, EdgeId, Gate, GateId, Instance, ModelError, Network, Node, NodeId, Perturbation, RouteTriplet,
    SpacingConstants, StopBounds, Timetable, TimetableEntry, Train, TrainId,
};
use crate::inoculation::perturb;
use crate::scheduler::{exhaustive_best, schedule, Permutation, SchedulerConfig};
use crate::time::TimeScalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    #[default]
    LineWithJunctions,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerturbSite {
    /// Late start from the first node.
    #[default]
    Origin,
    /// Any node but the last.
    Anywhere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub n_trains: usize,
    pub n_nodes: usize,
    pub topology: Topology,
    pub tracks_per_edge: (u32, u32),
    /// In-node tracks per node.
    pub platforms: (u32, u32),
    /// Route triplets listed per node, kept at least at the count needed to
    /// reach every incident track.
    pub routes_per_node: (usize, usize),
    /// Probability that a node carries a switching gate.
    pub gate_density: f64,
    /// Relative traffic intensity in `(0, 1]`; 1 starts a train every 3 minutes.
    pub density: f64,
    /// Delay range of the generated perturbation, seconds.
    pub delay: (i64, i64),
    /// Where the generated perturbation strikes the delayed train.
    pub perturb_at: PerturbSite,
    /// Longest dwell beyond the minimum at intermediate nodes, seconds.
    pub max_hold: i64,
    /// Share of consecutive same-track visits turned into spacing violations.
    pub violation_rate: f64,
    /// Share of trains given a passenger connection.
    pub connection_rate: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            n_trains: 12,
            n_nodes: 8,
            topology: Topology::LineWithJunctions,
            tracks_per_edge: (1, 2),
            platforms: (1, 3),
            routes_per_node: (4, 12),
            gate_density: 0.3,
            density: 0.5,
            delay: (300, 900),
            perturb_at: PerturbSite::Origin,
            max_hold: 300,
            violation_rate: 0.0,
            connection_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error("could only place {placed} of {wanted} trains after {attempts} attempts; lower the density")]
    Infeasible { placed: usize, wanted: usize, attempts: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Params(m.to_owned()));
        let range = |r: (u32, u32)| r.0 >= 1 && r.0 <= r.1;
        if self.n_trains == 0 {
            return bad("n_trains must be at least 1");
        }
        if self.n_nodes < 2 {
            return bad("n_nodes must be at least 2");
        }
        if !range(self.tracks_per_edge) || !range(self.platforms) {
            return bad("track and platform ranges must be non-empty and start at 1 or more");
        }
        if self.routes_per_node.0 == 0 || self.routes_per_node.0 > self.routes_per_node.1 {
            return bad("routes_per_node must be a non-empty range starting at 1 or more");
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad("density must lie in (0, 1]");
        }
        for (name, r) in
            [("gate_density", self.gate_density), ("violation_rate", self.violation_rate), ("connection_rate", self.connection_rate)]
        {
            if !(0.0..=1.0).contains(&r) {
                return Err(GenError::Params(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.max_hold < 0 {
            return bad("max_hold must be non-negative");
        }
        if self.delay.0 < 0 || self.delay.0 > self.delay.1 {
            return bad("delay range must be non-negative and ordered");
        }
        Ok(())
    }
}

/// Ground truth recorded next to a generated instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedMetadata<T> {
    pub seed: u64,
    /// Injected spacing violations `(first, second, node)`.
    pub injected: Vec<(TrainId, TrainId, NodeId)>,
    pub perturbation: Option<Perturbation<T>>,
    /// Candidate trains dropped because they could not be placed.
    pub dropped: usize,
}

impl<T: TimeScalar> GeneratedMetadata<T> {
    pub fn to_text(&self) -> String {
        let mut s = format!("railopt-metadata 1\nseed {}\ndropped {}\n", self.seed, self.dropped);
        if let Some(p) = &self.perturbation {
            let _ = writeln!(s, "perturbation {} {} {}", p.train, p.node, p.delay);
        }
        for (a, b, n) in &self.injected {
            let _ = writeln!(s, "violation {a} {b} {n}");
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Generated<T> {
    pub instance: Instance<T>,
    pub metadata: GeneratedMetadata<T>,
}

const EPOCH: i64 = 6 * 3600;
const CONNECTION_TRANSFER: i64 = 120;
/// Longest hold at a train's origin, seconds.
const ORIGIN_HOLD: i64 = 1800;

struct Layout {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    terminals: Vec<usize>,
}

fn line_with_junctions(n: usize, rng: &mut ChaCha8Rng) -> Layout {
    let branches = if n >= 5 { n / 4 } else { 0 };
    let main = n - branches;
    let mut edges: Vec<(usize, usize)> = (0..main - 1).map(|i| (i, i + 1)).collect();
    let mut terminals = vec![0, main - 1];
    for b in main..n {
        let at = rng.random_range(1..main - 1);
        edges.push((at, b));
        terminals.push(b);
    }
    Layout { nodes: n, edges, terminals }
}

fn grid(n: usize) -> Layout {
    let rows = ((n as f64).sqrt().floor() as usize).max(1);
    let cols = (n / rows).max(2);
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    let last = rows * cols - 1;
    let terminals = vec![0, cols - 1, last + 1 - cols, last];
    let mut t: Vec<usize> = terminals.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    t.retain(|&v| v <= last);
    Layout { nodes: rows * cols, edges, terminals: t }
}

fn shortest_path(layout: &Layout, from: usize, to: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); layout.nodes];
    for &(a, b) in &layout.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut prev = vec![usize::MAX; layout.nodes];
    prev[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        for &w in &adj[v] {
            if prev[w] == usize::MAX {
                prev[w] = v;
                queue.push_back(w);
            }
        }
    }
    let mut path = vec![to];
    while *path.last().unwrap() != from {
        path.push(prev[*path.last().unwrap()]);
    }
    path.reverse();
    path
}

fn routes_for(max_tracks: u32, platforms: u32, want: usize, rng: &mut ChaCha8Rng) -> Vec<RouteTriplet> {
    let mut chosen = BTreeSet::new();
    for inc in 0..max_tracks {
        for out in 0..max_tracks {
            chosen.insert(RouteTriplet::new(inc, (inc + out) % platforms, out));
        }
    }
    let mut rest: Vec<RouteTriplet> = (0..max_tracks)
        .flat_map(|i| (0..platforms).flat_map(move |u| (0..max_tracks).map(move |o| RouteTriplet::new(i, u, o))))
        .filter(|r| !chosen.contains(r))
        .collect();
    rest.shuffle(rng);
    for r in rest {
        if chosen.len() >= want {
            break;
        }
        chosen.insert(r);
    }
    chosen.into_iter().collect()
}

struct Candidate {
    path: Vec<usize>,
    start: i64,
    stops: Vec<(i64, i64)>,
    runs: Vec<i64>,
}

/// Generate one instance and its ground-truth metadata.
pub fn generate<T: TimeScalar>(params: &GeneratorParams) -> Result<Generated<T>, GenError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let t = |v: i64| T::from_i64(v);

    let layout = match params.topology {
        Topology::LineWithJunctions => line_with_junctions(params.n_nodes, &mut rng),
        Topology::Grid => grid(params.n_nodes),
    };
    let edges: Vec<Edge> = layout
        .edges
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| Edge {
            id: EdgeId(k as u32),
            endpoints: (NodeId(a as u32), NodeId(b as u32)),
            tracks: rng.random_range(params.tracks_per_edge.0..=params.tracks_per_edge.1),
        })
        .collect();
    let base_run: Vec<i64> = edges.iter().map(|_| rng.random_range(180..=420)).collect();
    let mut nodes = Vec::with_capacity(layout.nodes);
    for v in 0..layout.nodes {
        let max_tracks = edges
            .iter()
            .filter(|e| e.endpoints.0.index() == v || e.endpoints.1.index() == v)
            .map(|e| e.tracks)
            .max()
            .unwrap_or(1);
        let degree = edges.iter().filter(|e| e.endpoints.0.index() == v || e.endpoints.1.index() == v).count();
        let mut platforms = rng.random_range(params.platforms.0..=params.platforms.1);
        if degree > 2 {
            platforms = platforms.max(2);
        }
        let want = rng.random_range(params.routes_per_node.0..=params.routes_per_node.1);
        nodes.push(Node { id: NodeId(v as u32), platforms, routes: routes_for(max_tracks, platforms, want, &mut rng) });
    }
    let mut gates = Vec::new();
    for v in 0..layout.nodes {
        let incident: Vec<&Edge> =
            edges.iter().filter(|e| e.endpoints.0.index() == v || e.endpoints.1.index() == v).collect();
        if incident.len() < 2 || !rng.random_bool(params.gate_density) {
            continue;
        }
        let members = incident.iter().map(|e| (e.id, 0)).collect();
        gates.push(Gate {
            id: GateId(gates.len() as u32),
            node: NodeId(v as u32),
            members,
            capacity: 1,
            headway: t(rng.random_range(20..=40)),
        });
    }
    let network = Network { nodes, edges, gates };
    let spacing = SpacingConstants {
        node_gamma: (0..layout.nodes).map(|_| t(rng.random_range(60..=120))).collect(),
        edge_headway: network.edges.iter().map(|_| t(rng.random_range(60..=120))).collect(),
        overrides: Default::default(),
    };

    let span = (params.n_trains as f64 * 180.0 / params.density).ceil() as i64;
    let draw_candidate = |rng: &mut ChaCha8Rng| {
        let from = *layout.terminals.choose(rng).expect("terminals");
        let mut to = from;
        while to == from {
            to = if rng.random_bool(0.8) {
                *layout.terminals.choose(rng).expect("terminals")
            } else {
                rng.random_range(0..layout.nodes)
            };
        }
        let path = shortest_path(&layout, from, to);
        let speed = rng.random_range(1.0..1.3);
        let runs = path
            .windows(2)
            .map(|w| {
                let e = network.edge_between(NodeId(w[0] as u32), NodeId(w[1] as u32)).expect("adjacent");
                (base_run[e.id.index()] as f64 * speed).round() as i64
            })
            .collect();
        let k = path.len();
        let stops = (0..k)
            .map(|pos| {
                let hold = params.max_hold;
                if pos == 0 {
                    (0, ORIGIN_HOLD.max(hold))
                } else if pos + 1 == k {
                    (0, hold)
                } else if rng.random_bool(0.6) {
                    let lo = rng.random_range(30..=60);
                    (lo, lo + rng.random_range(hold / 2..=hold))
                } else {
                    (0, hold)
                }
            })
            .collect();
        Candidate { path, start: EPOCH + rng.random_range(0..=span), stops, runs }
    };

    let mut accepted: Vec<Candidate> = Vec::new();
    let mut dropped = 0;
    let attempts_max = 20;
    let mut timetable_rows = Vec::new();
    for attempt in 1..=attempts_max {
        while accepted.len() < params.n_trains {
            accepted.push(draw_candidate(&mut rng));
        }
        accepted.sort_by_key(|c| c.start);
        let wish = build_instance(&network, &spacing, &accepted, None, t);
        let problem = wish.problem()?;
        let cfg = SchedulerConfig::for_problem(&problem);
        let result = schedule(&problem, &Permutation::identity(accepted.len()), &cfg);
        if result.unscheduled.is_empty() {
            timetable_rows = result.assignments.into_iter().map(|r| r.expect("scheduled")).collect::<Vec<_>>();
            break;
        }
        dropped += result.unscheduled.len();
        let mut k = 0;
        accepted.retain(|_| {
            k += 1;
            !result.unscheduled.contains(&TrainId(k as u32 - 1))
        });
        if attempt == attempts_max {
            return Err(GenError::Infeasible { placed: accepted.len(), wanted: params.n_trains, attempts: attempts_max });
        }
    }

    // Renumber by realised departure from the first node.
    let mut order: Vec<usize> = (0..accepted.len()).collect();
    order.sort_by_key(|&k| (timetable_rows[k][0].departure, k));
    let accepted: Vec<Candidate> = {
        let mut slots: Vec<Option<Candidate>> = accepted.into_iter().map(Some).collect();
        order.iter().map(|&k| slots[k].take().expect("each once")).collect()
    };
    let rows: Vec<Vec<TimetableEntry<T>>> = order
        .iter()
        .map(|&k| {
            timetable_rows[k]
                .iter()
                .map(|a| TimetableEntry { arrival: a.arrival, departure: a.departure, route: a.route })
                .collect()
        })
        .collect();
    let mut instance = build_instance(&network, &spacing, &accepted, Some(rows), t);

    add_connections(&mut instance, params.connection_rate, &mut rng);
    let injected = inject_violations(&mut instance, params.violation_rate, &mut rng);

    let victim = TrainId(rng.random_range(0..instance.n_trains() as u32));
    let vt = instance.train(victim);
    let node = match params.perturb_at {
        PerturbSite::Origin => vt.itinerary[0],
        PerturbSite::Anywhere => vt.itinerary[rng.random_range(0..vt.itinerary.len() - 1)],
    };
    let perturbation = Perturbation { train: victim, node, delay: t(rng.random_range(params.delay.0..=params.delay.1)) };
    instance.perturbation = Some(perturbation);
    instance.validate()?;

    Ok(Generated {
        instance,
        metadata: GeneratedMetadata { seed: params.seed, injected, perturbation: Some(perturbation), dropped },
    })
}

fn build_instance<T: TimeScalar>(
    network: &Network<T>,
    spacing: &SpacingConstants<T>,
    candidates: &[Candidate],
    rows: Option<Vec<Vec<TimetableEntry<T>>>>,
    t: impl Fn(i64) -> T,
) -> Instance<T> {
    let trains: Vec<Train<T>> = candidates
        .iter()
        .enumerate()
        .map(|(k, c)| Train {
            id: TrainId(k as u32),
            itinerary: c.path.iter().map(|&v| NodeId(v as u32)).collect(),
            stops: c.stops.iter().map(|&(lo, hi)| StopBounds { min: t(lo), max: t(hi) }).collect(),
            runs: c.runs.iter().map(|&b| t(b)).collect(),
            connections: Vec::new(),
        })
        .collect();
    let entries = rows.unwrap_or_else(|| {
        candidates
            .iter()
            .map(|c| {
                let mut now = c.start;
                let mut prev_out: Option<u32> = None;
                (0..c.path.len())
                    .map(|pos| {
                        let node = &network.nodes[c.path[pos]];
                        let route = node
                            .routes
                            .iter()
                            .copied()
                            .find(|r| prev_out.is_none_or(|o| r.incoming == o))
                            .unwrap_or_default();
                        prev_out = Some(route.outgoing);
                        let a = now;
                        let d = a + c.stops[pos].0;
                        now = d + c.runs.get(pos).copied().unwrap_or(0);
                        TimetableEntry { arrival: t(a), departure: t(d), route }
                    })
                    .collect()
            })
            .collect()
    });
    Instance {
        network: network.clone(),
        trains,
        timetable: Timetable { entries },
        spacing: spacing.clone(),
        perturbation: None,
    }
}

fn add_connections<T: TimeScalar>(instance: &mut Instance<T>, rate: f64, rng: &mut ChaCha8Rng) {
    let eps = T::from_i64(CONNECTION_TRANSFER);
    let window = T::from_i64(CONNECTION_TRANSFER + 900);
    for owner in 0..instance.n_trains() {
        if !rng.random_bool(rate) {
            continue;
        }
        let mut options = Vec::new();
        let tr = &instance.trains[owner];
        for pos in 1..tr.itinerary.len() - 1 {
            let node = tr.itinerary[pos];
            let d = instance.timetable.entries[owner][pos].departure;
            for (other, ot) in instance.trains.iter().enumerate() {
                let Some(opos) = ot.position_of(node).filter(|_| other != owner) else { continue };
                let a = instance.timetable.entries[other][opos].arrival;
                if d >= a + eps && d <= a + window {
                    options.push((TrainId(other as u32), node));
                }
            }
        }
        if let Some(&(partner, node)) = options.choose(rng) {
            instance.trains[owner].connections.push(Connection { partner, node, min_transfer: eps });
        }
    }
}

fn inject_violations<T: TimeScalar>(
    instance: &mut Instance<T>,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(TrainId, TrainId, NodeId)> {
    if rate <= 0.0 {
        return Vec::new();
    }
    // Consecutive visits per (node, in-node track), in arrival order.
    let mut visits: Vec<(NodeId, u32, T, T, TrainId)> = Vec::new();
    for tr in &instance.trains {
        for (pos, e) in instance.timetable.entries[tr.id.index()].iter().enumerate() {
            visits.push((tr.itinerary[pos], e.route.inner, e.arrival, e.departure, tr.id));
        }
    }
    visits.sort();
    let sites: Vec<(TrainId, TrainId, NodeId, T)> = visits
        .windows(2)
        .filter(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1 && w[1].2 >= w[0].3)
        .map(|w| (w[0].4, w[1].4, w[0].0, w[1].2 - w[0].3))
        .collect();
    let count = (rate * sites.len() as f64).round() as usize;
    let mut picked: Vec<_> = sites.choose_multiple(rng, count).copied().collect();
    picked.sort();
    let mut out = Vec::with_capacity(picked.len());
    for (a, b, node, gap) in picked {
        let g = gap + T::from_i64(rng.random_range(10..=40));
        instance.spacing.overrides.insert((a, b, node), g);
        instance.spacing.overrides.insert((b, a, node), g);
        out.push((a, b, node));
    }
    out
}

/// Two perturbation variants of `base` at its perturbation site.
pub fn make_instance_pair<T: TimeScalar>(
    base: &Instance<T>,
    delay_easy: T,
    delay_hard: T,
) -> Result<(Instance<T>, Instance<T>), GenError> {
    let site = base.perturbation.ok_or_else(|| GenError::Params("base instance has no perturbation site".into()))?;
    if delay_easy < T::zero() || delay_easy > delay_hard {
        return Err(GenError::Params("need 0 <= easy delay <= hard delay".into()));
    }
    let with = |delay| base.with_perturbation(Some(Perturbation { delay, ..site }));
    Ok((with(delay_easy), with(delay_hard)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difficulty {
    Easy,
    Hard,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifyMethod {
    /// Every order decoded.
    Exhaustive,
    /// Best of sampled decodes.
    Sampled { samples: u64 },
    /// Budget too small for either.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceLabel<T> {
    pub difficulty: Difficulty,
    /// Fitness of decoding the timetable order.
    pub identity_fitness: T,
    /// Exhaustive optimum, or best sampled fitness.
    pub reference: Option<T>,
    pub method: ClassifyMethod,
}

/// Decodes drawn by the sampled classifier.
pub const CLASSIFY_SAMPLES: u64 = 1000;

/// Label an instance easy when decoding the timetable order is already
/// optimal. Instances with at most `budget` orders are enumerated; larger
/// ones compare against the best of [`CLASSIFY_SAMPLES`] decodes, half of them
/// uniformly random orders and half the timetable order after one to three
/// random transpositions.
pub fn classify<T: TimeScalar>(instance: &Instance<T>, budget: u64) -> Result<InstanceLabel<T>, ModelError> {
    let problem = instance.problem()?;
    let cfg = SchedulerConfig::for_problem(&problem);
    let n = problem.n_trains();
    let identity = Permutation::identity(n);
    let identity_fitness = schedule(&problem, &identity, &cfg).fitness;
    let label = |reference: Option<T>, method| InstanceLabel {
        difficulty: match reference {
            Some(r) if identity_fitness <= r => Difficulty::Easy,
            Some(_) => Difficulty::Hard,
            None => Difficulty::Unknown,
        },
        identity_fitness,
        reference,
        method,
    };
    if let Some((_, best)) = exhaustive_best(&problem, &cfg, budget) {
        return Ok(label(Some(best), ClassifyMethod::Exhaustive));
    }
    if budget < CLASSIFY_SAMPLES {
        return Ok(label(None, ClassifyMethod::None));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x636c_6173);
    let mut best = identity_fitness;
    for k in 0..CLASSIFY_SAMPLES {
        let p = if k % 2 == 0 {
            let mut p = identity.clone();
            p.0.shuffle(&mut rng);
            p
        } else {
            let pr = rng.random_range(1..=3);
            perturb(&identity, pr, &mut rng)
        };
        best = best.min(schedule(&problem, &p, &cfg).fitness);
    }
    Ok(label(Some(best), ClassifyMethod::Sampled { samples: CLASSIFY_SAMPLES }))
}
