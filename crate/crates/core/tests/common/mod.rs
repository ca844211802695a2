//! Helpers shared by the integration tests: a brute-force schedule checker
//! written directly from the constraint definitions, an exhaustive search
//! that does not go through the library's permutation enumerator, and small
//! instance factories.

#![allow(dead_code)]

use railopt_core::instance_gen::{generate, GeneratorParams};
use railopt_core::rail_model::{Assignment, Instance, NodeId, TrainId};
use railopt_core::scheduler::{schedule, Permutation, SchedulerConfig};
use railopt_core::{Problem, Time};

type Rows = [Option<Vec<Assignment<Time>>>];

fn edge_of(inst: &Instance<Time>, a: NodeId, b: NodeId) -> (usize, bool) {
    let e = inst
        .network
        .edges
        .iter()
        .find(|e| e.endpoints == (a, b) || e.endpoints == (b, a))
        .expect("consecutive itinerary nodes are adjacent");
    (e.id.index(), e.endpoints == (a, b))
}

struct EdgeUse {
    train: usize,
    edge: usize,
    track: u32,
    forward: bool,
    entry: Time,
    exit: Time,
}

/// Every broken constraint among the scheduled trains, as readable strings.
///
/// `lower` gives each train's earliest allowed arrival per position.
pub fn brute_force_violations(inst: &Instance<Time>, lower: &[Vec<Time>], rows: &Rows) -> Vec<String> {
    let mut bad = Vec::new();
    let mut edges = Vec::new();
    let mut gate_uses: Vec<Vec<(usize, Time)>> = vec![Vec::new(); inst.network.gates.len()];
    for (t, r) in rows.iter().enumerate() {
        let Some(r) = r else { continue };
        let train = &inst.trains[t];
        let tt = &inst.timetable.entries[t];
        if r.len() != train.itinerary.len() {
            bad.push(format!("train {t}: {} rows for {} nodes", r.len(), train.itinerary.len()));
            continue;
        }
        for (p, a) in r.iter().enumerate() {
            let node = &inst.network.nodes[train.itinerary[p].index()];
            if a.arrival < lower[t][p] || a.departure < tt[p].departure {
                bad.push(format!("train {t} pos {p}: earlier than allowed"));
            }
            let dwell = a.departure - a.arrival;
            if dwell < train.stops[p].min || dwell > train.stops[p].max {
                bad.push(format!("train {t} pos {p}: dwell {dwell} outside the stop window"));
            }
            if !node.routes.contains(&a.route) {
                bad.push(format!("train {t} pos {p}: route {:?} not admissible", a.route));
            }
            if p > 0 {
                let prev = &r[p - 1];
                if a.arrival < prev.departure + train.runs[p - 1] {
                    bad.push(format!("train {t} pos {p}: faster than the running time"));
                }
                if a.route.incoming != prev.route.outgoing {
                    bad.push(format!("train {t} pos {p}: changes track on the edge"));
                }
                let (edge, forward) = edge_of(inst, train.itinerary[p - 1], train.itinerary[p]);
                edges.push(EdgeUse { train: t, edge, track: a.route.incoming, forward, entry: prev.departure, exit: a.arrival });
            }
            for c in train.connections.iter().filter(|c| c.node == train.itinerary[p]) {
                if let Some(pr) = &rows[c.partner.index()] {
                    let pp = inst.trains[c.partner.index()].position_of(c.node).expect("partner visits the node");
                    if a.departure < pr[pp].arrival + c.min_transfer {
                        bad.push(format!("train {t} pos {p}: leaves before its connection from {}", c.partner));
                    }
                }
            }
            for g in inst.network.gates.iter().filter(|g| g.node == train.itinerary[p]) {
                let inc = (p > 0).then(|| (inst.network.edges[edge_of(inst, train.itinerary[p - 1], train.itinerary[p]).0].id, a.route.incoming));
                let out = (p + 1 < r.len())
                    .then(|| (inst.network.edges[edge_of(inst, train.itinerary[p], train.itinerary[p + 1]).0].id, a.route.outgoing));
                if inc.is_some_and(|m| g.members.contains(&m)) || out.is_some_and(|m| g.members.contains(&m)) {
                    gate_uses[g.id.index()].push((t, a.departure));
                }
            }
        }
    }

    // Node spacing, pairwise.
    let visits: Vec<(usize, NodeId, u32, Time, Time)> = rows
        .iter()
        .enumerate()
        .filter_map(|(t, r)| r.as_ref().map(|r| (t, r)))
        .flat_map(|(t, r)| {
            r.iter().enumerate().map(move |(p, a)| (t, inst.trains[t].itinerary[p], a.route.inner, a.arrival, a.departure))
        })
        .collect();
    for (i, x) in visits.iter().enumerate() {
        for y in &visits[i + 1..] {
            if x.0 == y.0 || x.1 != y.1 || x.2 != y.2 {
                continue;
            }
            let (tx, ty) = (TrainId(x.0 as u32), TrainId(y.0 as u32));
            let x_then_y = y.3 >= x.4 + inst.spacing.gamma(tx, ty, x.1);
            let y_then_x = x.3 >= y.4 + inst.spacing.gamma(ty, tx, x.1);
            if !x_then_y && !y_then_x {
                bad.push(format!("trains {} and {} too close on track {} of node {}", x.0, y.0, x.2, x.1));
            }
        }
    }

    // Edge headways, pairwise.
    for (i, x) in edges.iter().enumerate() {
        for y in &edges[i + 1..] {
            if x.train == y.train || x.edge != y.edge || x.track != y.track {
                continue;
            }
            let h = inst.spacing.edge_headway[x.edge];
            let ok = if x.forward != y.forward {
                x.exit + h <= y.entry || y.exit + h <= x.entry
            } else {
                (y.entry >= x.entry + h && y.exit >= x.exit + h) || (x.entry >= y.entry + h && x.exit >= y.exit + h)
            };
            if !ok {
                bad.push(format!("trains {} and {} too close on track {} of edge {}", x.train, y.train, x.track, x.edge));
            }
        }
    }

    // Gate capacity: at no instant may more than `capacity` windows overlap.
    for (g, uses) in gate_uses.iter().enumerate() {
        let gate = &inst.network.gates[g];
        let h = gate.headway;
        for &(_, s) in uses {
            let p = s - h;
            let covering = uses.iter().filter(|&&(_, u)| u - h <= p && p < u + h).count();
            if covering > gate.capacity as usize {
                bad.push(format!("gate {g} holds {covering} trains at {p}"));
            }
        }
    }
    bad
}

/// Earliest allowed arrivals: the timetable, plus the delay at the perturbed entry.
pub fn lower_bounds(inst: &Instance<Time>) -> Vec<Vec<Time>> {
    let mut lb: Vec<Vec<Time>> = inst.timetable.entries.iter().map(|r| r.iter().map(|e| e.arrival).collect()).collect();
    if let Some(p) = &inst.perturbation {
        let pos = inst.trains[p.train.index()].position_of(p.node).expect("perturbation on itinerary");
        lb[p.train.index()][pos] += p.delay;
    }
    lb
}

/// Minimum fitness over all orders, enumerated with Heap's algorithm.
pub fn brute_force_best(problem: &Problem, cfg: &SchedulerConfig<Time>) -> Time {
    fn heap(k: usize, a: &mut Vec<TrainId>, f: &mut dyn FnMut(&[TrainId])) {
        if k <= 1 {
            f(a);
            return;
        }
        heap(k - 1, a, f);
        for i in 0..k - 1 {
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, f);
        }
    }
    let n = problem.n_trains();
    let mut ids: Vec<TrainId> = (0..n as u32).map(TrainId).collect();
    let mut best = Time::MAX;
    heap(n, &mut ids, &mut |p| {
        best = best.min(schedule(problem, &Permutation(p.to_vec()), cfg).fitness);
    });
    best
}

/// A contended small instance for exhaustive checks.
pub fn small_params(n_trains: usize, seed: u64) -> GeneratorParams {
    GeneratorParams {
        n_trains,
        n_nodes: 5,
        density: 1.0,
        delay: (300, 900),
        violation_rate: 0.2,
        seed,
        ..GeneratorParams::default()
    }
}

pub fn small_instance(n_trains: usize, seed: u64) -> Instance<Time> {
    generate::<Time>(&small_params(n_trains, seed)).expect("small instances generate").instance
}
