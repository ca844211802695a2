//! Constraint predicates shared by the decoder and the post-hoc validator.

use std::ops::ControlFlow;

use super::occupancy::used_gates;
use super::{Assignment, EdgeVisit, NodeId, Occupancy, PerturbedProblem, RouteTriplet, TrainId};
use crate::time::TimeScalar;

/// Constraint families, in the order they are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConflictKind {
    InitialTime,
    Speed,
    Stop,
    NodeSpacing,
    EdgeSpacing,
    Connection,
    Gate,
}

/// Which variable must move forward, and to what value, to clear a conflict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clearing<T> {
    Arrival(T),
    Departure(T),
}

impl<T: Copy> Clearing<T> {
    pub fn time(self) -> T {
        match self {
            Clearing::Arrival(t) | Clearing::Departure(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conflict<T> {
    pub kind: ConflictKind,
    /// Already-placed train involved in the conflict, if any.
    pub blocker: Option<TrainId>,
    /// `None` when no forward shift of the candidate can clear it.
    pub clearing: Option<Clearing<T>>,
}

/// A tentative placement of `train` at itinerary position `pos`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate<T> {
    pub train: TrainId,
    pub pos: usize,
    pub arrival: T,
    pub departure: T,
    pub route: RouteTriplet,
    /// Known arrival at the next node. When absent, the outgoing edge is
    /// checked against the earliest possible exit `departure + beta`.
    pub next_arrival: Option<T>,
}

/// A conflict found on a complete schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation<T> {
    pub train: TrainId,
    pub node: NodeId,
    pub pos: usize,
    pub conflict: Conflict<T>,
}

/// Every constraint `candidate` violates against the trains in `occ`.
///
/// Positions of the candidate's own train before `pos` are read from `occ`;
/// its own visits are never treated as blockers. An empty list means feasible.
pub fn check_constraints<T: TimeScalar>(
    problem: &PerturbedProblem<T>,
    occ: &Occupancy<T>,
    candidate: &Candidate<T>,
) -> Vec<Conflict<T>> {
    let mut out = Vec::new();
    let _ = scan(problem, occ, candidate, &mut |c| {
        out.push(c);
        ControlFlow::Continue(())
    });
    out
}

/// First conflict in check order, if any.
pub(crate) fn first_conflict<T: TimeScalar>(
    problem: &PerturbedProblem<T>,
    occ: &Occupancy<T>,
    candidate: &Candidate<T>,
) -> Option<Conflict<T>> {
    match scan(problem, occ, candidate, &mut ControlFlow::Break) {
        ControlFlow::Break(c) => Some(c),
        ControlFlow::Continue(()) => None,
    }
}

/// Re-check every assignment of a complete schedule. `assignments[train]` is
/// `None` for unscheduled trains, which are ignored.
pub fn validate_schedule<T: TimeScalar>(
    problem: &PerturbedProblem<T>,
    assignments: &[Option<Vec<Assignment<T>>>],
) -> Vec<Violation<T>> {
    let mut occ = Occupancy::new(problem);
    for (i, rows) in assignments.iter().enumerate() {
        if let Some(rows) = rows {
            for (pos, a) in rows.iter().enumerate() {
                occ.place(problem, TrainId(i as u32), pos, *a);
            }
        }
    }
    validate_occupancy(problem, &occ)
}

pub(crate) fn validate_occupancy<T: TimeScalar>(
    problem: &PerturbedProblem<T>,
    occ: &Occupancy<T>,
) -> Vec<Violation<T>> {
    let mut out = Vec::new();
    for train in &problem.instance().trains {
        let rows = occ.assignments(train.id);
        for (pos, a) in rows.iter().enumerate() {
            let Some(a) = a else { continue };
            let candidate = Candidate {
                train: train.id,
                pos,
                arrival: a.arrival,
                departure: a.departure,
                route: a.route,
                next_arrival: rows.get(pos + 1).and_then(|n| n.map(|n| n.arrival)),
            };
            for conflict in check_constraints(problem, occ, &candidate) {
                out.push(Violation { train: train.id, node: train.itinerary[pos], pos, conflict });
            }
        }
    }
    out
}

type Sink<'a, T> = dyn FnMut(Conflict<T>) -> ControlFlow<Conflict<T>> + 'a;

fn scan<T: TimeScalar>(
    problem: &PerturbedProblem<T>,
    occ: &Occupancy<T>,
    cand: &Candidate<T>,
    sink: &mut Sink<'_, T>,
) -> ControlFlow<Conflict<T>> {
    let inst = problem.instance();
    let train = inst.train(cand.train);
    let node = train.itinerary[cand.pos];
    let (a, d) = (cand.arrival, cand.departure);
    let prev = cand.pos.checked_sub(1).and_then(|p| occ.assignment(cand.train, p));
    let emit = |sink: &mut Sink<'_, T>, kind, blocker, clearing| sink(Conflict { kind, blocker, clearing });

    // Initial times.
    let a_lb = problem.arrival_bound(cand.train, cand.pos);
    let d_lb = problem.departure_bound(cand.train, cand.pos);
    if a < a_lb {
        emit(sink, ConflictKind::InitialTime, None, Some(Clearing::Arrival(a_lb)))?;
    }
    if d < d_lb {
        emit(sink, ConflictKind::InitialTime, None, Some(Clearing::Departure(d_lb)))?;
    }

    // Speed.
    if let Some(prev) = prev {
        let earliest = prev.departure.sat_add(train.runs[cand.pos - 1]);
        if a < earliest {
            emit(sink, ConflictKind::Speed, None, Some(Clearing::Arrival(earliest)))?;
        }
    }

    // Stopping time.
    let stop = train.stops[cand.pos];
    let dwell = d.sat_sub(a);
    if dwell < stop.min {
        emit(sink, ConflictKind::Stop, None, Some(Clearing::Departure(a.sat_add(stop.min))))?;
    } else if dwell > stop.max {
        emit(sink, ConflictKind::Stop, None, Some(Clearing::Arrival(d.sat_sub(stop.max))))?;
    }

    // Node spacing on the in-node track.
    let cap = problem.gamma_cap(node);
    for v in occ.node_visits(node, cand.route.inner) {
        if v.train == cand.train || a >= v.departure.sat_add(cap) || v.arrival >= d.sat_add(cap) {
            continue;
        }
        let after = v.departure.sat_add(inst.spacing.gamma(v.train, cand.train, node));
        let before = d.sat_add(inst.spacing.gamma(cand.train, v.train, node));
        if a < after && v.arrival < before {
            emit(sink, ConflictKind::NodeSpacing, Some(v.train), Some(Clearing::Arrival(after)))?;
        }
    }

    // Edge spacing: the incoming edge (entry frozen) then the outgoing one.
    if let (Some(leg), Some(prev)) = (problem.incoming_leg(cand.train, cand.pos), prev) {
        let h = inst.spacing.edge_headway[leg.edge.index()];
        for v in occ.edge_visits(leg.edge, cand.route.incoming) {
            if v.train == cand.train {
                continue;
            }
            if let Some(clearing) = edge_pair(prev.departure, a, leg.forward, v, h, false) {
                emit(sink, ConflictKind::EdgeSpacing, Some(v.train), clearing)?;
            }
        }
    }
    if let Some(leg) = problem.outgoing_leg(cand.train, cand.pos) {
        let h = inst.spacing.edge_headway[leg.edge.index()];
        let exit = cand.next_arrival.unwrap_or_else(|| d.sat_add(train.runs[cand.pos]));
        for v in occ.edge_visits(leg.edge, cand.route.outgoing) {
            if v.train == cand.train {
                continue;
            }
            if let Some(clearing) = edge_pair(d, exit, leg.forward, v, h, true) {
                emit(sink, ConflictKind::EdgeSpacing, Some(v.train), clearing)?;
            }
        }
    }

    // Connections, both as the waiting train and as the awaited one.
    for f in problem.feeders(cand.train, cand.pos) {
        if let Some(pa) = occ.assignment(f.other, f.other_pos) {
            let ready = pa.arrival.sat_add(f.min_transfer);
            if d < ready {
                emit(sink, ConflictKind::Connection, Some(f.other), Some(Clearing::Departure(ready)))?;
            }
        }
    }
    for w in problem.dependents(cand.train, cand.pos) {
        if w.other == cand.train {
            continue;
        }
        if let Some(oa) = occ.assignment(w.other, w.other_pos) {
            if oa.departure < a.sat_add(w.min_transfer) {
                emit(sink, ConflictKind::Connection, Some(w.other), None)?;
            }
        }
    }

    // Switching gates.
    for g in used_gates(problem, cand.train, cand.pos, cand.route) {
        let gate = &inst.network.gates[g.index()];
        if let Some((blocker, clear)) = gate_conflict(occ, g, cand.train, d, gate.headway, gate.capacity) {
            emit(sink, ConflictKind::Gate, Some(blocker), Some(Clearing::Departure(clear)))?;
        }
    }

    ControlFlow::Continue(())
}

/// Spacing between the candidate's occupation `[entry, exit]` of an edge track
/// and another train's. Returns `Some(clearing)` on violation; the inner
/// `None` means the conflict cannot be cleared by moving forward.
fn edge_pair<T: TimeScalar>(
    entry: T,
    exit: T,
    forward: bool,
    other: &EdgeVisit<T>,
    h: T,
    entry_movable: bool,
) -> Option<Option<Clearing<T>>> {
    if other.forward != forward {
        if other.exit.sat_add(h) <= entry || exit.sat_add(h) <= other.entry {
            return None;
        }
        return Some(entry_movable.then(|| Clearing::Departure(other.exit.sat_add(h))));
    }
    let other_first = other.entry <= entry;
    let ok = if other_first {
        entry >= other.entry.sat_add(h) && exit >= other.exit.sat_add(h)
    } else {
        other.entry >= entry.sat_add(h) && other.exit >= exit.sat_add(h)
    };
    if ok {
        return None;
    }
    if entry_movable {
        // Follow the other train: clear both its entry and its exit.
        let shift = (other.entry.sat_add(h).sat_sub(entry))
            .max(other.exit.sat_add(h).sat_sub(exit))
            .max(T::zero());
        return Some(Some(Clearing::Departure(entry.sat_add(shift))));
    }
    if other_first && entry >= other.entry.sat_add(h) {
        return Some(Some(Clearing::Arrival(other.exit.sat_add(h))));
    }
    Some(None)
}

/// Capacity check of `[d - h, d + h)` against the other occupations of a gate.
/// Returns the blocker to get past and the departure that does so.
fn gate_conflict<T: TimeScalar>(
    occ: &Occupancy<T>,
    gate: super::GateId,
    train: TrainId,
    d: T,
    h: T,
    capacity: u32,
) -> Option<(TrainId, T)> {
    let (cs, ce) = (d.sat_sub(h), d.sat_add(h));
    let overlapping: Vec<(T, T, TrainId)> = occ
        .gate_visits(gate)
        .iter()
        .filter(|v| v.train != train)
        .map(|v| (v.time.sat_sub(h), v.time.sat_add(h), v.train))
        .filter(|&(s, e, _)| s < ce && e > cs)
        .collect();
    if overlapping.len() < capacity as usize {
        return None;
    }
    let mut points: Vec<T> = overlapping.iter().map(|&(s, _, _)| s.max(cs)).collect();
    points.sort();
    for p in points {
        let active: Vec<&(T, T, TrainId)> =
            overlapping.iter().filter(|&&(s, e, _)| s <= p && p < e).collect();
        if active.len() >= capacity as usize {
            let &&(_, end, blocker) = active
                .iter()
                .min_by_key(|&&&(_, e, t)| (e, t))
                .expect("non-empty active set");
            return Some((blocker, end.sat_add(h)));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::*;
    use super::*;

    fn placed(problem: &PerturbedProblem<i64>, trains: &[u32]) -> Occupancy<i64> {
        let mut occ = Occupancy::new(problem);
        for &t in trains {
            let id = TrainId(t);
            for (pos, e) in problem.instance().timetable.entries[t as usize].iter().enumerate() {
                occ.place(problem, id, pos, Assignment { arrival: e.arrival, departure: e.departure, route: e.route });
            }
        }
        occ
    }

    fn cand_from_timetable(problem: &PerturbedProblem<i64>, t: u32, pos: usize) -> Candidate<i64> {
        let e = problem.instance().timetable.entries[t as usize][pos];
        Candidate {
            train: TrainId(t),
            pos,
            arrival: e.arrival,
            departure: e.departure,
            route: e.route,
            next_arrival: None,
        }
    }

    #[test]
    fn theoretical_times_are_clean_for_a_single_train() {
        let inst = instance(line_network(3, 1, 1), vec![simple_train(0, &[0, 1, 2], 1000, 60, 30, 120)], 30, 30);
        let p = inst.problem().unwrap();
        let mut occ = Occupancy::new(&p);
        for pos in 0..3 {
            let c = cand_from_timetable(&p, 0, pos);
            assert!(check_constraints(&p, &occ, &c).is_empty());
            occ.place(&p, TrainId(0), pos, Assignment { arrival: c.arrival, departure: c.departure, route: c.route });
        }
    }

    #[test]
    fn node_spacing_conflict_clears_at_departure_plus_gamma() {
        // Train 0 occupies node 1 for [1090, 1120]; train 1 arrives at 1130
        // with gamma = 30: 1130 < 1120 + 30 and 1090 < 1150 + 30.
        let gamma = 30;
        let inst = instance(
            line_network(3, 2, 1),
            vec![simple_train(0, &[0, 1, 2], 1000, 90, 30, 600), simple_train(1, &[0, 1, 2], 1040, 90, 20, 600)],
            gamma,
            0,
        );
        let p = inst.problem().unwrap();
        let mut occ = placed(&p, &[0]);
        occ.place(&p, TrainId(1), 0, Assignment { arrival: 1040, departure: 1040, route: RouteTriplet::new(0, 0, 1) });
        let mut c = cand_from_timetable(&p, 1, 1);
        c.route = RouteTriplet::new(1, 0, 1);
        assert_eq!((c.arrival, c.departure), (1130, 1150));
        let conflicts = check_constraints(&p, &occ, &c);
        assert_eq!(conflicts.len(), 1, "{conflicts:?}");
        let k = conflicts[0];
        assert_eq!(k.kind, ConflictKind::NodeSpacing);
        assert_eq!(k.blocker, Some(TrainId(0)));
        assert_eq!(k.clearing, Some(Clearing::Arrival(1120 + gamma)));
    }

    #[test]
    fn overlong_dwell_is_a_stop_conflict() {
        let inst = instance(line_network(3, 1, 1), vec![simple_train(0, &[0, 1, 2], 1000, 60, 30, 120)], 30, 30);
        let p = inst.problem().unwrap();
        let occ = placed(&p, &[]);
        let mut occ = occ;
        let e0 = p.instance().timetable.entries[0][0];
        occ.place(&p, TrainId(0), 0, Assignment { arrival: e0.arrival, departure: e0.departure, route: e0.route });
        let mut c = cand_from_timetable(&p, 0, 1);
        c.departure = c.arrival + 121;
        let conflicts = check_constraints(&p, &occ, &c);
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].kind, ConflictKind::Stop);
    }

    #[test]
    fn early_arrival_fails_initial_time() {
        let inst = instance(line_network(2, 1, 1), vec![simple_train(0, &[0, 1], 1000, 60, 0, 60)], 30, 30);
        let p = inst.problem().unwrap();
        let occ = Occupancy::new(&p);
        let mut c = cand_from_timetable(&p, 0, 0);
        c.arrival -= 1;
        c.departure -= 1;
        let kinds: Vec<_> = check_constraints(&p, &occ, &c).iter().map(|c| c.kind).collect();
        assert!(kinds.iter().all(|&k| k == ConflictKind::InitialTime) && !kinds.is_empty());
    }

    #[test]
    fn overtaking_on_a_frozen_entry_is_unclearable() {
        // Slow train 0 enters first; fast train 1 entered 60 s later and is
        // already placed arriving earlier. Checking train 0's arrival: it was
        // first in, must also be first out.
        let mut slow = simple_train(0, &[0, 1], 1000, 300, 0, 600);
        slow.1[1].arrival = 1300;
        slow.1[1].departure = 1300;
        let fast = simple_train(1, &[0, 1], 1060, 100, 0, 600);
        let inst = instance(line_network(2, 1, 2), vec![slow, fast], 0, 30);
        let mut inst = inst;
        inst.timetable.entries[1][0].route = RouteTriplet::new(0, 1, 0);
        inst.timetable.entries[1][1].route = RouteTriplet::new(0, 1, 0);
        let p = inst.problem().unwrap();
        let mut occ = placed(&p, &[1]);
        let e0 = p.instance().timetable.entries[0][0];
        occ.place(&p, TrainId(0), 0, Assignment { arrival: e0.arrival, departure: e0.departure, route: e0.route });
        let c = cand_from_timetable(&p, 0, 1);
        let conflicts = check_constraints(&p, &occ, &c);
        assert!(conflicts.iter().any(|c| c.kind == ConflictKind::EdgeSpacing && c.clearing.is_none()), "{conflicts:?}");
    }

    #[test]
    fn gate_capacity_one_excludes_overlap() {
        let mut net = line_network(3, 1, 1);
        net.gates.push(Gate {
            id: GateId(0),
            node: NodeId(1),
            members: vec![(EdgeId(0), 0), (EdgeId(1), 0)],
            capacity: 1,
            headway: 40,
        });
        // Node 1 track conflicts are disabled via gamma 0 and a 2-platform node.
        let mut net2 = net.clone();
        for n in &mut net2.nodes {
            n.platforms = 2;
            n.routes.push(RouteTriplet::new(0, 1, 0));
        }
        let mut inst = instance(
            net2,
            vec![simple_train(0, &[0, 1, 2], 1000, 100, 0, 600), simple_train(1, &[2, 1, 0], 1050, 100, 0, 600)],
            0,
            0,
        );
        for e in &mut inst.timetable.entries[1] {
            e.route = RouteTriplet::new(0, 1, 0);
        }
        let p = inst.problem().unwrap();
        let mut occ = placed(&p, &[0]);
        let e = p.instance().timetable.entries[1][0];
        occ.place(&p, TrainId(1), 0, Assignment { arrival: e.arrival, departure: e.departure, route: e.route });
        // Train 1 passes node 1 at 1150; train 0 at 1100: |1150 - 1100| < 80.
        let mut c = cand_from_timetable(&p, 1, 1);
        c.next_arrival = Some(1250);
        let conflicts = check_constraints(&p, &occ, &c);
        let gate: Vec<_> = conflicts.iter().filter(|c| c.kind == ConflictKind::Gate).collect();
        assert_eq!(gate.len(), 1, "{conflicts:?}");
        assert_eq!(gate[0].clearing, Some(Clearing::Departure(1100 + 40 + 40)));
    }

    #[test]
    fn check_is_pure() {
        let inst = instance(
            line_network(3, 1, 1),
            vec![simple_train(0, &[0, 1, 2], 1000, 90, 30, 600), simple_train(1, &[0, 1, 2], 1040, 90, 20, 600)],
            30,
            30,
        );
        let p = inst.problem().unwrap();
        let occ = placed(&p, &[0]);
        let c = cand_from_timetable(&p, 1, 0);
        assert_eq!(check_constraints(&p, &occ, &c), check_constraints(&p, &occ, &c));
    }
}
