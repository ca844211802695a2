use std::collections::BTreeSet;

use thiserror::Error;

use super::{Instance, NodeId, RouteTriplet, TrainId};
use crate::time::TimeScalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid {entity}: {message}")]
    Invalid { entity: String, message: String },
    #[error("perturbation references train {train} at node {node}, which is not on its itinerary")]
    UnknownPerturbation { train: TrainId, node: NodeId },
}

fn invalid(entity: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Invalid { entity: entity.into(), message: message.into() }
}

/// Non-fatal finding: the instance loads, but the timetable itself breaks a
/// constraint (a pre-existing "minor violation").
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationWarning {
    pub entity: String,
    pub message: String,
}

impl<T: TimeScalar> Instance<T> {
    /// Check every structural invariant. Timetable constraint breaches are
    /// returned as warnings, not errors.
    pub fn validate(&self) -> Result<Vec<ValidationWarning>, ModelError> {
        let net = &self.network;
        let n_nodes = net.nodes.len();
        let n_edges = net.edges.len();
        let zero = T::zero();

        for (i, node) in net.nodes.iter().enumerate() {
            if node.id.index() != i {
                return Err(invalid(format!("node {}", node.id), format!("ids must be dense, expected {i}")));
            }
            if node.platforms == 0 {
                return Err(invalid(format!("node {}", node.id), "needs at least one in-node track"));
            }
        }
        for (i, edge) in net.edges.iter().enumerate() {
            let name = format!("edge {}", edge.id);
            if edge.id.index() != i {
                return Err(invalid(name, format!("ids must be dense, expected {i}")));
            }
            if edge.tracks == 0 {
                return Err(invalid(name, "track count must be positive"));
            }
            let (a, b) = edge.endpoints;
            if a.index() >= n_nodes || b.index() >= n_nodes || a == b {
                return Err(invalid(name, "endpoints must be two distinct existing nodes"));
            }
        }
        for node in &net.nodes {
            let max_tracks = net.incident_edges(node.id).map(|e| e.tracks).max().unwrap_or(1);
            for r in &node.routes {
                if r.inner >= node.platforms || r.incoming >= max_tracks || r.outgoing >= max_tracks {
                    return Err(invalid(
                        format!("route {r} at node {}", node.id),
                        format!("track index out of range (platforms {}, edge tracks {max_tracks})", node.platforms),
                    ));
                }
            }
        }
        for (i, gate) in net.gates.iter().enumerate() {
            let name = format!("gate {}", gate.id);
            if gate.id.index() != i {
                return Err(invalid(name, format!("ids must be dense, expected {i}")));
            }
            if gate.node.index() >= n_nodes {
                return Err(invalid(name, "unknown node"));
            }
            if gate.capacity == 0 || gate.headway < zero {
                return Err(invalid(name, "capacity must be positive and headway non-negative"));
            }
            for &(e, t) in &gate.members {
                let Some(edge) = net.edges.get(e.index()) else {
                    return Err(invalid(name, format!("unknown member edge {e}")));
                };
                if edge.other(gate.node).is_none() || t >= edge.tracks {
                    return Err(invalid(name, format!("member {e}:{t} is not a track incident to node {}", gate.node)));
                }
            }
        }

        let n_trains = self.trains.len();
        for (i, train) in self.trains.iter().enumerate() {
            let name = format!("train {}", train.id);
            if train.id.index() != i {
                return Err(invalid(name, format!("ids must be dense, expected {i}")));
            }
            let k = train.itinerary.len();
            if k < 2 {
                return Err(invalid(name, "itinerary needs at least two nodes"));
            }
            let distinct: BTreeSet<_> = train.itinerary.iter().collect();
            if distinct.len() != k {
                return Err(invalid(name, "itinerary visits a node twice"));
            }
            if let Some(n) = train.itinerary.iter().find(|n| n.index() >= n_nodes) {
                return Err(invalid(name, format!("unknown node {n}")));
            }
            for w in train.itinerary.windows(2) {
                if net.edge_between(w[0], w[1]).is_none() {
                    return Err(invalid(name, format!("no edge between {} and {}", w[0], w[1])));
                }
            }
            if train.stops.len() != k {
                return Err(invalid(name, "needs one stop window per itinerary node"));
            }
            if train.stops.iter().any(|s| s.min < zero || s.min > s.max) {
                return Err(invalid(name, "stop window must satisfy 0 <= min <= max"));
            }
            if train.runs.len() != k - 1 || train.runs.iter().any(|&b| b <= zero) {
                return Err(invalid(name, "needs a positive running time per itinerary edge"));
            }
            for c in &train.connections {
                if c.partner.index() >= n_trains || c.partner == train.id {
                    return Err(invalid(name, format!("bad connection partner {}", c.partner)));
                }
                if train.position_of(c.node).is_none()
                    || self.trains[c.partner.index()].position_of(c.node).is_none()
                {
                    return Err(invalid(name, format!("connection node {} not shared with {}", c.node, c.partner)));
                }
                if c.min_transfer < zero {
                    return Err(invalid(name, "negative transfer time"));
                }
            }
        }

        if self.timetable.entries.len() != n_trains {
            return Err(invalid("timetable", "needs entries for every train"));
        }
        let mut warnings = Vec::new();
        for train in &self.trains {
            let rows = &self.timetable.entries[train.id.index()];
            let name = format!("timetable of train {}", train.id);
            if rows.len() != train.itinerary.len() {
                return Err(invalid(name, "needs one entry per itinerary node"));
            }
            for (pos, e) in rows.iter().enumerate() {
                if e.departure < e.arrival {
                    return Err(invalid(&name, format!("departure before arrival at position {pos}")));
                }
                let node = &net.nodes[train.itinerary[pos].index()];
                if !route_admissible(self, train.id, pos, e.route) || !node.routes.contains(&e.route) {
                    return Err(invalid(&name, format!("route {} not admissible at node {}", e.route, node.id)));
                }
            }
        }

        let sp = &self.spacing;
        if sp.node_gamma.len() != n_nodes || sp.edge_headway.len() != n_edges {
            return Err(invalid("spacing", "needs one gamma per node and one headway per edge"));
        }
        if sp.node_gamma.iter().chain(sp.edge_headway.iter()).any(|&v| v < zero) {
            return Err(invalid("spacing", "values must be non-negative"));
        }
        for (&(a, b, n), &v) in &sp.overrides {
            if a.index() >= n_trains || b.index() >= n_trains || n.index() >= n_nodes || v < zero {
                return Err(invalid("spacing", format!("bad override ({a},{b},{n})")));
            }
        }

        if let Some(p) = &self.perturbation {
            if p.train.index() >= n_trains || self.trains[p.train.index()].position_of(p.node).is_none() {
                return Err(ModelError::UnknownPerturbation { train: p.train, node: p.node });
            }
            if p.delay < zero {
                return Err(invalid("perturbation", "delay must be non-negative"));
            }
        }

        self.check_connected()?;

        let problem = super::apply_perturbation(self, None)?;
        for v in problem.timetable_violations() {
            warnings.push(ValidationWarning {
                entity: format!("train {} at node {}", v.train, v.node),
                message: format!("timetable breaks {:?} constraint", v.conflict.kind),
            });
        }
        Ok(warnings)
    }

    fn check_connected(&self) -> Result<(), ModelError> {
        let n = self.network.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut touched = BTreeSet::new();
        for train in &self.trains {
            for w in train.itinerary.windows(2) {
                touched.insert(w[0].index());
                touched.insert(w[1].index());
                let (a, b) = (find(&mut parent, w[0].index()), find(&mut parent, w[1].index()));
                parent[a] = b;
            }
        }
        let roots: BTreeSet<usize> = touched.iter().map(|&x| find(&mut parent, x)).collect();
        if roots.len() > 1 {
            return Err(invalid("network", "itineraries span disconnected components"));
        }
        Ok(())
    }
}

/// Whether `route` is usable by `train` at itinerary position `pos` given the
/// track counts of the edges it arrives on and leaves by.
pub(crate) fn route_admissible<T: TimeScalar>(
    inst: &Instance<T>,
    train: TrainId,
    pos: usize,
    route: RouteTriplet,
) -> bool {
    let net = &inst.network;
    let it = &inst.trains[train.index()].itinerary;
    let node = &net.nodes[it[pos].index()];
    if route.inner >= node.platforms {
        return false;
    }
    if pos > 0 {
        match net.edge_between(it[pos - 1], it[pos]) {
            Some(e) if route.incoming < e.tracks => {}
            _ => return false,
        }
    }
    if pos + 1 < it.len() {
        match net.edge_between(it[pos], it[pos + 1]) {
            Some(e) if route.outgoing < e.tracks => {}
            _ => return false,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::*;

    #[test]
    fn minimal_instance_is_valid() {
        let net = line_network(2, 1, 1);
        let inst = instance(net, vec![simple_train(0, &[0, 1], 100, 60, 0, 60)], 30, 30);
        assert!(inst.validate().unwrap().is_empty());
    }

    #[test]
    fn route_on_missing_track_is_rejected() {
        let mut net = line_network(2, 1, 1);
        net.nodes[1].routes.push(RouteTriplet::new(2, 0, 0));
        let inst = instance(net, vec![simple_train(0, &[0, 1], 100, 60, 0, 60)], 30, 30);
        let err = inst.validate().unwrap_err();
        assert!(matches!(err, ModelError::Invalid { ref entity, .. } if entity.contains("node 1")), "{err}");
    }

    #[test]
    fn short_itinerary_rejected() {
        let net = line_network(2, 1, 1);
        let mut inst = instance(net, vec![simple_train(0, &[0, 1], 100, 60, 0, 60)], 30, 30);
        inst.trains[0].itinerary.truncate(1);
        assert!(inst.validate().is_err());
    }

    #[test]
    fn bad_stop_window_rejected() {
        let net = line_network(3, 1, 1);
        let mut inst = instance(net, vec![simple_train(0, &[0, 1, 2], 100, 60, 30, 120)], 30, 30);
        inst.trains[0].stops[1] = StopBounds { min: 50, max: 10 };
        assert!(inst.validate().is_err());
    }

    #[test]
    fn disconnected_itineraries_rejected() {
        let mut net = line_network(4, 1, 1);
        net.edges.remove(1);
        net.edges[1].id = EdgeId(1);
        let inst = instance(
            net,
            vec![simple_train(0, &[0, 1], 100, 60, 0, 60), simple_train(1, &[2, 3], 100, 60, 0, 60)],
            30,
            30,
        );
        let mut inst = inst;
        inst.spacing.edge_headway.truncate(2);
        assert!(matches!(inst.validate(), Err(ModelError::Invalid { entity, .. }) if entity == "network"));
    }

    #[test]
    fn timetable_spacing_breach_is_a_warning() {
        let net = line_network(2, 1, 1);
        let inst = instance(
            net,
            vec![simple_train(0, &[0, 1], 100, 60, 0, 60), simple_train(1, &[0, 1], 110, 60, 0, 60)],
            30,
            5,
        );
        let warnings = inst.validate().unwrap();
        assert!(!warnings.is_empty());
    }
}
