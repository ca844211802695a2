use super::validate::route_admissible;
use super::{EdgeId, GateId, Instance, ModelError, Perturbation, RouteTriplet, TrainId};
use crate::time::TimeScalar;

/// The edge a train uses between two consecutive itinerary nodes and whether
/// it runs in the edge's `endpoints.0 -> endpoints.1` direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Leg {
    pub edge: EdgeId,
    pub forward: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConnectionRef<T> {
    pub other: TrainId,
    pub other_pos: usize,
    pub min_transfer: T,
}

/// Immutable, indexed problem: an instance plus resolved perturbation bounds.
///
/// Safe to share between concurrent decoders.
#[derive(Debug, Clone)]
pub struct PerturbedProblem<T> {
    instance: Instance<T>,
    perturbation: Option<Perturbation<T>>,
    arrival_lb: Vec<Vec<T>>,
    legs: Vec<Vec<Leg>>,
    routes: Vec<Vec<Vec<RouteTriplet>>>,
    gates_at: Vec<Vec<GateId>>,
    /// Largest `gamma` any pair can need at each node.
    gamma_cap: Vec<T>,
    /// Connections owned by `[train][pos]`: wait for the partner's arrival.
    feeders: Vec<Vec<Vec<ConnectionRef<T>>>>,
    /// Connections where `[train][pos]` is the partner: others wait for it.
    dependents: Vec<Vec<Vec<ConnectionRef<T>>>>,
    penalty: T,
    offset: T,
}

/// Resolve `perturbation` against the instance's timetable.
///
/// Every arrival lower bound is the theoretical arrival, except the perturbed
/// entry whose bound is `a0 + delay`. Downstream bounds are left alone; the
/// decoder propagates the delay through running and dwell times.
pub fn apply_perturbation<T: TimeScalar>(
    instance: &Instance<T>,
    perturbation: Option<&Perturbation<T>>,
) -> Result<PerturbedProblem<T>, ModelError> {
    let mut arrival_lb: Vec<Vec<T>> = instance
        .timetable
        .entries
        .iter()
        .map(|rows| rows.iter().map(|e| e.arrival).collect())
        .collect();
    if let Some(p) = perturbation {
        let pos = instance
            .trains
            .get(p.train.index())
            .and_then(|t| t.position_of(p.node))
            .ok_or(ModelError::UnknownPerturbation { train: p.train, node: p.node })?;
        let lb = &mut arrival_lb[p.train.index()][pos];
        *lb = lb.sat_add(p.delay);
    }

    let net = &instance.network;
    let legs: Vec<Vec<Leg>> = instance
        .trains
        .iter()
        .map(|t| {
            t.itinerary
                .windows(2)
                .map(|w| {
                    let e = net.edge_between(w[0], w[1]).expect("validated itinerary adjacency");
                    Leg { edge: e.id, forward: e.endpoints.0 == w[0] }
                })
                .collect()
        })
        .collect();
    let routes = instance
        .trains
        .iter()
        .map(|t| {
            (0..t.itinerary.len())
                .map(|pos| {
                    net.nodes[t.itinerary[pos].index()]
                        .routes
                        .iter()
                        .copied()
                        .filter(|&r| route_admissible(instance, t.id, pos, r))
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut gates_at = vec![Vec::new(); net.nodes.len()];
    for g in &net.gates {
        gates_at[g.node.index()].push(g.id);
    }

    let mut gamma_cap = instance.spacing.node_gamma.clone();
    for (&(_, _, node), &g) in &instance.spacing.overrides {
        if let Some(c) = gamma_cap.get_mut(node.index()) {
            *c = (*c).max(g);
        }
    }

    let mut feeders: Vec<Vec<Vec<ConnectionRef<T>>>> =
        instance.trains.iter().map(|t| vec![Vec::new(); t.itinerary.len()]).collect();
    let mut dependents = feeders.clone();
    for t in &instance.trains {
        for c in &t.connections {
            let (Some(pos), Some(ppos)) =
                (t.position_of(c.node), instance.trains[c.partner.index()].position_of(c.node))
            else {
                continue;
            };
            feeders[t.id.index()][pos].push(ConnectionRef {
                other: c.partner,
                other_pos: ppos,
                min_transfer: c.min_transfer,
            });
            dependents[c.partner.index()][ppos].push(ConnectionRef {
                other: t.id,
                other_pos: pos,
                min_transfer: c.min_transfer,
            });
        }
    }

    // Horizon measured from the time origin so the penalty also dominates
    // the arrival sum a dropped train no longer contributes.
    let mut lo = T::max_value();
    let mut hi = T::min_value();
    let mut offset = T::zero();
    for rows in &instance.timetable.entries {
        for e in rows {
            lo = lo.min(e.arrival);
            hi = hi.max(e.departure);
            offset = offset.sat_add(e.arrival);
        }
    }
    let delay = perturbation.map(|p| p.delay).unwrap_or_else(T::zero);
    let span = if hi >= lo { hi.sat_sub(lo) } else { T::zero() };
    let horizon = hi.max(T::zero()).sat_add(delay).sat_add(span).max(T::one());
    let longest = instance.trains.iter().map(|t| t.itinerary.len()).max().unwrap_or(1);
    let penalty = horizon
        .sat_mul(T::from_usize(instance.trains.len().max(1)))
        .sat_mul(T::from_usize(longest));

    Ok(PerturbedProblem {
        instance: instance.clone(),
        perturbation: perturbation.copied(),
        arrival_lb,
        legs,
        routes,
        gates_at,
        gamma_cap,
        feeders,
        dependents,
        penalty,
        offset,
    })
}

impl<T: TimeScalar> PerturbedProblem<T> {
    pub fn new(instance: &Instance<T>) -> Result<Self, ModelError> {
        apply_perturbation(instance, instance.perturbation.as_ref())
    }

    pub fn instance(&self) -> &Instance<T> {
        &self.instance
    }

    pub fn perturbation(&self) -> Option<&Perturbation<T>> {
        self.perturbation.as_ref()
    }

    pub fn n_trains(&self) -> usize {
        self.instance.trains.len()
    }

    pub fn train_ids(&self) -> impl Iterator<Item = TrainId> {
        (0..self.instance.trains.len() as u32).map(TrainId)
    }

    pub fn itinerary_len(&self, train: TrainId) -> usize {
        self.instance.trains[train.index()].itinerary.len()
    }

    /// Arrival lower bound `a0'` at `[train][pos]`.
    pub fn arrival_bound(&self, train: TrainId, pos: usize) -> T {
        self.arrival_lb[train.index()][pos]
    }

    /// Departure lower bound `d0` at `[train][pos]`.
    pub fn departure_bound(&self, train: TrainId, pos: usize) -> T {
        self.instance.timetable.entries[train.index()][pos].departure
    }

    /// Leg arriving at itinerary position `pos` (`None` at the origin).
    pub fn incoming_leg(&self, train: TrainId, pos: usize) -> Option<Leg> {
        pos.checked_sub(1).map(|p| self.legs[train.index()][p])
    }

    /// Leg leaving itinerary position `pos` (`None` at the terminus).
    pub fn outgoing_leg(&self, train: TrainId, pos: usize) -> Option<Leg> {
        self.legs[train.index()].get(pos).copied()
    }

    /// Routes at `[train][pos]` compatible with the incident edges' track counts.
    pub fn admissible_routes(&self, train: TrainId, pos: usize) -> &[RouteTriplet] {
        &self.routes[train.index()][pos]
    }

    pub fn gates_at(&self, node: super::NodeId) -> &[GateId] {
        &self.gates_at[node.index()]
    }

    pub(crate) fn gamma_cap(&self, node: super::NodeId) -> T {
        self.gamma_cap[node.index()]
    }

    pub(crate) fn feeders(&self, train: TrainId, pos: usize) -> &[ConnectionRef<T>] {
        &self.feeders[train.index()][pos]
    }

    pub(crate) fn dependents(&self, train: TrainId, pos: usize) -> &[ConnectionRef<T>] {
        &self.dependents[train.index()][pos]
    }

    /// Default per-unscheduled-train penalty: horizon x |C| x longest itinerary.
    pub fn penalty_weight(&self) -> T {
        self.penalty
    }

    /// Sum of all theoretical arrivals. `fitness - offset` is the excess
    /// over the unperturbed timetable (the total delay when every train is scheduled).
    pub fn fitness_offset(&self) -> T {
        self.offset
    }

    /// Constraint breaches already present in the unperturbed timetable.
    pub fn timetable_violations(&self) -> Vec<super::Violation<T>> {
        let mut occ = super::Occupancy::new(self);
        for t in &self.instance.trains {
            for (pos, e) in self.instance.timetable.entries[t.id.index()].iter().enumerate() {
                occ.place(
                    self,
                    t.id,
                    pos,
                    super::Assignment { arrival: e.arrival, departure: e.departure, route: e.route },
                );
            }
        }
        super::constraints::validate_occupancy(self, &occ)
    }
}
