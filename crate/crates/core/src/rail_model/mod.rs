//! Railway world model.
//!
//! A [`Network`] of nodes (stations, switching areas) joined by multi-track
//! [`Edge`]s, the [`Train`]s with their fixed itineraries, the unperturbed
//! [`Timetable`], the [`SpacingConstants`] and an optional [`Perturbation`].
//! [`Instance`] bundles them; [`PerturbedProblem`] is the immutable, indexed
//! view that the decoder and the validator both evaluate against.

mod constraints;
mod occupancy;
mod problem;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::TimeScalar;

pub use constraints::{
    check_constraints, validate_schedule, Candidate, Clearing, Conflict, ConflictKind, Violation,
};
pub(crate) use constraints::first_conflict;
pub use occupancy::{Assignment, EdgeVisit, GateVisit, NodeVisit, Occupancy};
pub use problem::{apply_perturbation, Leg, PerturbedProblem};
pub use validate::{ModelError, ValidationWarning};

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
        )]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Dense train identifier, `0..n_trains`.
    TrainId
);
id_type!(
    /// Dense node identifier, `0..n_nodes`.
    NodeId
);
id_type!(
    /// Dense edge identifier, `0..n_edges`.
    EdgeId
);
id_type!(
    /// Dense switching-gate identifier.
    GateId
);

/// A physically admissible combination of incoming-edge track, in-node track
/// and outgoing-edge track at a node.
///
/// Track indices are relative to whichever incident edges the train uses.
/// At the first node of an itinerary `incoming` is irrelevant; at the last
/// node `outgoing` is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RouteTriplet {
    pub incoming: u32,
    pub inner: u32,
    pub outgoing: u32,
}

impl RouteTriplet {
    pub const fn new(incoming: u32, inner: u32, outgoing: u32) -> Self {
        Self { incoming, inner, outgoing }
    }
}

impl fmt::Display for RouteTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.incoming, self.inner, self.outgoing)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    /// Number of in-node tracks (platforms, loops).
    pub platforms: u32,
    pub routes: Vec<RouteTriplet>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: EdgeId,
    pub endpoints: (NodeId, NodeId),
    pub tracks: u32,
}

impl Edge {
    /// The endpoint that is not `node`, if `node` is an endpoint.
    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        match self.endpoints {
            (a, b) if a == node => Some(b),
            (a, b) if b == node => Some(a),
            _ => None,
        }
    }
}

/// A capacity-limited switching resource shared by several edge tracks at a node.
///
/// A train whose route at `node` uses a member track occupies the gate for
/// `[t - headway, t + headway)` around its departure `t` from the node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate<T> {
    pub id: GateId,
    pub node: NodeId,
    pub members: Vec<(EdgeId, u32)>,
    pub capacity: u32,
    pub headway: T,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network<T> {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub gates: Vec<Gate<T>>,
}

impl<T> Network<T> {
    /// Edge joining `a` and `b` (either orientation).
    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<&Edge> {
        self.edges
            .iter()
            .find(|e| e.endpoints == (a, b) || e.endpoints == (b, a))
    }

    pub fn incident_edges(&self, node: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.endpoints.0 == node || e.endpoints.1 == node)
    }
}

/// Dwell window `min <= d - a <= max` at one itinerary node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopBounds<T> {
    pub min: T,
    pub max: T,
}

/// The owning train must not leave `node` before `partner` has arrived there
/// plus `min_transfer` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Connection<T> {
    pub partner: TrainId,
    pub node: NodeId,
    pub min_transfer: T,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Train<T> {
    pub id: TrainId,
    pub itinerary: Vec<NodeId>,
    /// One entry per itinerary node.
    pub stops: Vec<StopBounds<T>>,
    /// Minimum running time per consecutive itinerary pair (`len - 1` entries).
    pub runs: Vec<T>,
    pub connections: Vec<Connection<T>>,
}

impl<T> Train<T> {
    pub fn position_of(&self, node: NodeId) -> Option<usize> {
        self.itinerary.iter().position(|&n| n == node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimetableEntry<T> {
    pub arrival: T,
    pub departure: T,
    pub route: RouteTriplet,
}

/// Theoretical times and routes, indexed `[train][itinerary position]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timetable<T> {
    pub entries: Vec<Vec<TimetableEntry<T>>>,
}

impl<T: TimeScalar> Timetable<T> {
    pub fn entry(&self, train: TrainId, pos: usize) -> &TimetableEntry<T> {
        &self.entries[train.index()][pos]
    }

    /// Order of trains by theoretical departure from their first node, ties by id.
    pub fn departure_order(&self) -> Vec<TrainId> {
        let mut order: Vec<TrainId> = (0..self.entries.len() as u32).map(TrainId).collect();
        order.sort_by_key(|t| {
            let first = self.entries[t.index()].first().map(|e| e.departure);
            (first, *t)
        });
        order
    }
}

/// Minimum separations between trains sharing a resource.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpacingConstants<T> {
    /// Default `gamma` per node: minimum seconds between one train leaving an
    /// in-node track and the next one arriving on it.
    pub node_gamma: Vec<T>,
    /// Headway per edge, applied per track at both entry and exit.
    pub edge_headway: Vec<T>,
    /// Ordered-pair overrides `(first, second, node) -> gamma`.
    pub overrides: BTreeMap<(TrainId, TrainId, NodeId), T>,
}

impl<T: TimeScalar> SpacingConstants<T> {
    /// `gamma(first, second, node)`: required gap when `first` leaves before `second` arrives.
    #[inline]
    pub fn gamma(&self, first: TrainId, second: TrainId, node: NodeId) -> T {
        if self.overrides.is_empty() {
            return self.node_gamma[node.index()];
        }
        self.overrides
            .get(&(first, second, node))
            .copied()
            .unwrap_or(self.node_gamma[node.index()])
    }
}

/// One train delayed at one node. `delay == 0` is the empty perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Perturbation<T> {
    pub train: TrainId,
    pub node: NodeId,
    pub delay: T,
}

/// Everything an instance file carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance<T> {
    pub network: Network<T>,
    pub trains: Vec<Train<T>>,
    pub timetable: Timetable<T>,
    pub spacing: SpacingConstants<T>,
    pub perturbation: Option<Perturbation<T>>,
}

impl<T: TimeScalar> Instance<T> {
    pub fn n_trains(&self) -> usize {
        self.trains.len()
    }

    pub fn train(&self, id: TrainId) -> &Train<T> {
        &self.trains[id.index()]
    }

    /// Copy of this instance with a different (or no) perturbation.
    pub fn with_perturbation(&self, perturbation: Option<Perturbation<T>>) -> Self {
        Self { perturbation, ..self.clone() }
    }

    /// Resolve the instance's own perturbation into a [`PerturbedProblem`].
    pub fn problem(&self) -> Result<PerturbedProblem<T>, ModelError> {
        apply_perturbation(self, self.perturbation.as_ref())
    }
}
