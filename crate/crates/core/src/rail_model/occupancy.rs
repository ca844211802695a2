use super::{GateId, PerturbedProblem, RouteTriplet, TrainId};
use crate::time::TimeScalar;

/// Assigned arrival, departure and route of one train at one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Assignment<T> {
    pub arrival: T,
    pub departure: T,
    pub route: RouteTriplet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeVisit<T> {
    pub train: TrainId,
    pub arrival: T,
    pub departure: T,
}

/// Occupation of one edge track from entry (departure at the upstream node)
/// to exit (arrival at the downstream node).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeVisit<T> {
    pub train: TrainId,
    pub forward: bool,
    pub entry: T,
    pub exit: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateVisit<T> {
    pub train: TrainId,
    pub time: T,
}

/// Per-resource index of everything currently placed.
#[derive(Debug, Clone)]
pub struct Occupancy<T> {
    node_tracks: Vec<Vec<Vec<NodeVisit<T>>>>,
    edge_tracks: Vec<Vec<Vec<EdgeVisit<T>>>>,
    gates: Vec<Vec<GateVisit<T>>>,
    placed: Vec<Vec<Option<Assignment<T>>>>,
}

impl<T: TimeScalar> Occupancy<T> {
    pub fn new(problem: &PerturbedProblem<T>) -> Self {
        let inst = problem.instance();
        Self {
            node_tracks: inst
                .network
                .nodes
                .iter()
                .map(|n| vec![Vec::new(); n.platforms as usize])
                .collect(),
            edge_tracks: inst
                .network
                .edges
                .iter()
                .map(|e| vec![Vec::new(); e.tracks as usize])
                .collect(),
            gates: vec![Vec::new(); inst.network.gates.len()],
            placed: inst.trains.iter().map(|t| vec![None; t.itinerary.len()]).collect(),
        }
    }

    pub fn assignment(&self, train: TrainId, pos: usize) -> Option<&Assignment<T>> {
        self.placed[train.index()].get(pos).and_then(Option::as_ref)
    }

    pub fn assignments(&self, train: TrainId) -> &[Option<Assignment<T>>] {
        &self.placed[train.index()]
    }

    pub fn is_placed(&self, train: TrainId) -> bool {
        self.placed[train.index()].iter().all(Option::is_some)
    }

    pub fn node_visits(&self, node: super::NodeId, track: u32) -> &[NodeVisit<T>] {
        &self.node_tracks[node.index()][track as usize]
    }

    pub fn edge_visits(&self, edge: super::EdgeId, track: u32) -> &[EdgeVisit<T>] {
        &self.edge_tracks[edge.index()][track as usize]
    }

    pub fn gate_visits(&self, gate: GateId) -> &[GateVisit<T>] {
        &self.gates[gate.index()]
    }

    /// Record `assignment` at `[train][pos]`. The previous position, if any,
    /// must already be placed so the incoming edge occupation is known.
    pub fn place(&mut self, problem: &PerturbedProblem<T>, train: TrainId, pos: usize, assignment: Assignment<T>) {
        let node = problem.instance().train(train).itinerary[pos];
        self.node_tracks[node.index()][assignment.route.inner as usize].push(NodeVisit {
            train,
            arrival: assignment.arrival,
            departure: assignment.departure,
        });
        if let (Some(leg), Some(prev)) = (problem.incoming_leg(train, pos), pos.checked_sub(1)) {
            let prev = self.placed[train.index()][prev].expect("previous position placed first");
            self.edge_tracks[leg.edge.index()][assignment.route.incoming as usize].push(EdgeVisit {
                train,
                forward: leg.forward,
                entry: prev.departure,
                exit: assignment.arrival,
            });
        }
        for gate in used_gates(problem, train, pos, assignment.route) {
            self.gates[gate.index()].push(GateVisit { train, time: assignment.departure });
        }
        self.placed[train.index()][pos] = Some(assignment);
    }

    /// Remove every placed position of `train`.
    pub fn remove_train(&mut self, problem: &PerturbedProblem<T>, train: TrainId) {
        let itinerary = &problem.instance().train(train).itinerary;
        for pos in 0..itinerary.len() {
            let Some(a) = self.placed[train.index()][pos].take() else { continue };
            self.node_tracks[itinerary[pos].index()][a.route.inner as usize].retain(|v| v.train != train);
            if let Some(leg) = problem.incoming_leg(train, pos) {
                self.edge_tracks[leg.edge.index()][a.route.incoming as usize].retain(|v| v.train != train);
            }
            for gate in used_gates(problem, train, pos, a.route) {
                self.gates[gate.index()].retain(|v| v.train != train);
            }
        }
    }
}

/// Gates at `[train][pos]`'s node whose member tracks `route` uses.
pub(crate) fn used_gates<'a, T: TimeScalar>(
    problem: &'a PerturbedProblem<T>,
    train: TrainId,
    pos: usize,
    route: RouteTriplet,
) -> impl Iterator<Item = GateId> + 'a {
    let node = problem.instance().train(train).itinerary[pos];
    let inc = problem.incoming_leg(train, pos).map(|l| (l.edge, route.incoming));
    let out = problem.outgoing_leg(train, pos).map(|l| (l.edge, route.outgoing));
    problem.gates_at(node).iter().copied().filter(move |g| {
        let members = &problem.instance().network.gates[g.index()].members;
        inc.is_some_and(|m| members.contains(&m)) || out.is_some_and(|m| members.contains(&m))
    })
}
