//! Line-oriented text formats for instances and schedules.
//!
//! Every line is a keyword followed by whitespace-separated fields. Sections
//! open with `begin <name> [args]` and close with `end`; sections nest.
//! Blank lines and `#` comments are ignored on input. The writer emits one
//! canonical form (two-space indentation per nesting level, LF line endings),
//! so `write(parse(write(x))) == write(x)` byte for byte.
//!
//! Instance grammar (version 1):
//!
//! ```text
//! railopt-instance 1
//! begin network
//!   node <id> platforms <n>
//!   route <node> <incoming> <inner> <outgoing>
//!   edge <id> <node> <node> tracks <n>
//!   gate <id> node <node> capacity <n> headway <s> members <edge>:<track>...
//! end
//! begin trains
//!   begin train <id>
//!     itinerary <node>...
//!     stop <node> <min> <max>
//!     run <from> <to> <seconds>
//!     connection <partner> <node> <seconds>
//!   end
//! end
//! begin timetable
//!   entry <train> <node> <arrival> <departure> <incoming> <inner> <outgoing>
//! end
//! begin spacing
//!   node-gamma <node> <seconds>
//!   edge-headway <edge> <seconds>
//!   gamma <first> <second> <node> <seconds>
//! end
//! begin perturbation
//!   delay <train> <node> <seconds>
//! end
//! ```
//!
//! `perturbation` is optional. Schedules share the `entry` grammar:
//!
//! ```text
//! railopt-schedule 1
//! fitness <value>
//! begin schedule
//!   entry <train> <node> <arrival> <departure> <incoming> <inner> <outgoing>
//!   unscheduled <train>...
//!   kicks <count per train>...
//!   order <train>...
//! end
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::rail_model::{
    Assignment, Connection, Edge, EdgeId, Gate, GateId, Instance, ModelError, Network, Node, NodeId,
    Perturbation, RouteTriplet, SpacingConstants, StopBounds, Timetable, TimetableEntry, Train, TrainId,
};
use crate::scheduler::ScheduleResult;
use crate::time::TimeScalar;

pub const INSTANCE_HEADER: &str = "railopt-instance 1";
pub const SCHEDULE_HEADER: &str = "railopt-schedule 1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn perr(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

struct Line<'a> {
    no: usize,
    depth: usize,
    words: Vec<&'a str>,
}

impl<'a> Line<'a> {
    fn key(&self) -> &'a str {
        self.words[0]
    }

    fn num<N: FromStr>(&self, i: usize) -> Result<N, FormatError> {
        let w = self.words.get(i).ok_or_else(|| perr(self.no, format!("missing field {i} of `{}`", self.key())))?;
        w.parse().map_err(|_| perr(self.no, format!("bad number `{w}`")))
    }

    /// Value following the literal keyword `name` at position `i`.
    fn named<N: FromStr>(&self, i: usize, name: &str) -> Result<N, FormatError> {
        match self.words.get(i) {
            Some(&w) if w == name => self.num(i + 1),
            _ => Err(perr(self.no, format!("expected `{name}` in `{}`", self.key()))),
        }
    }

    fn arity(&self, n: usize) -> Result<(), FormatError> {
        if self.words.len() != n {
            return Err(perr(self.no, format!("`{}` takes {} fields, got {}", self.key(), n - 1, self.words.len() - 1)));
        }
        Ok(())
    }
}

fn lex(text: &str) -> Result<Vec<Line<'_>>, FormatError> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = content.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let no = i + 1;
        if words[0] == "end" {
            if words.len() != 1 {
                return Err(perr(no, "`end` takes no fields"));
            }
            depth = depth.checked_sub(1).ok_or_else(|| perr(no, "unbalanced `end`"))?;
            out.push(Line { no, depth, words });
            continue;
        }
        out.push(Line { no, depth, words: words.clone() });
        if words[0] == "begin" {
            depth += 1;
        }
    }
    if depth != 0 {
        return Err(perr(text.lines().count(), "unterminated section"));
    }
    Ok(out)
}

/// Splits a lexed stream into header and top-level sections.
fn sections<'a, 'b>(lines: &'b [Line<'a>]) -> Result<Vec<(&'b Line<'a>, &'b [Line<'a>])>, FormatError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let l = &lines[i];
        if l.key() != "begin" || l.depth != 0 {
            return Err(perr(l.no, format!("unexpected `{}` at top level", l.key())));
        }
        let start = i + 1;
        let mut j = start;
        while !(lines[j].key() == "end" && lines[j].depth == 0) {
            j += 1;
        }
        out.push((l, &lines[start..j]));
        i = j + 1;
    }
    Ok(out)
}

fn check_header(lines: &[Line<'_>], header: &str) -> Result<(), FormatError> {
    match lines.first() {
        Some(l) if l.words.join(" ") == header => Ok(()),
        Some(l) => Err(perr(l.no, format!("expected header `{header}`"))),
        None => Err(perr(0, "empty document")),
    }
}

fn parse_entry<T: TimeScalar>(l: &Line<'_>) -> Result<(TrainId, NodeId, TimetableEntry<T>), FormatError> {
    l.arity(8)?;
    Ok((
        TrainId(l.num(1)?),
        NodeId(l.num(2)?),
        TimetableEntry {
            arrival: l.num(3)?,
            departure: l.num(4)?,
            route: RouteTriplet::new(l.num(5)?, l.num(6)?, l.num(7)?),
        },
    ))
}

/// Parse and validate an instance document. Timetable violations are logged
/// as warnings; structural breaches are errors.
pub fn load_instance<T: TimeScalar>(text: &str) -> Result<Instance<T>, FormatError> {
    let inst = parse_instance(text)?;
    for w in inst.validate()? {
        log::warn!("{}: {}", w.entity, w.message);
    }
    Ok(inst)
}

/// Parse without semantic validation.
pub fn parse_instance<T: TimeScalar>(text: &str) -> Result<Instance<T>, FormatError> {
    let lines = lex(text)?;
    check_header(&lines, INSTANCE_HEADER)?;
    let mut network = None;
    let mut trains = None;
    let mut timetable_rows = None;
    let mut spacing = None;
    let mut perturbation = None;
    for (head, body) in sections(&lines[1..])? {
        let name = head.words.get(1).copied().unwrap_or("");
        match name {
            "network" => network = Some(parse_network(body)?),
            "trains" => trains = Some(parse_trains(body)?),
            "timetable" => {
                let mut rows = Vec::new();
                for l in body {
                    if l.key() != "entry" {
                        return Err(perr(l.no, format!("unexpected `{}` in timetable", l.key())));
                    }
                    rows.push((l.no, parse_entry::<T>(l)?));
                }
                timetable_rows = Some(rows);
            }
            "spacing" => spacing = Some(body),
            "perturbation" => {
                let [l] = body else {
                    return Err(perr(head.no, "perturbation section holds exactly one `delay` line"));
                };
                if l.key() != "delay" {
                    return Err(perr(l.no, "expected `delay`"));
                }
                l.arity(4)?;
                perturbation = Some(Perturbation { train: TrainId(l.num(1)?), node: NodeId(l.num(2)?), delay: l.num(3)? });
            }
            other => return Err(perr(head.no, format!("unknown section `{other}`"))),
        }
    }
    let network: Network<T> = network.ok_or_else(|| perr(0, "missing network section"))?;
    let trains: Vec<Train<T>> = trains.ok_or_else(|| perr(0, "missing trains section"))?;

    let mut entries: Vec<Vec<Option<TimetableEntry<T>>>> =
        trains.iter().map(|t| vec![None; t.itinerary.len()]).collect();
    for (no, (t, n, e)) in timetable_rows.ok_or_else(|| perr(0, "missing timetable section"))? {
        let pos = trains
            .get(t.index())
            .and_then(|tr| tr.position_of(n))
            .ok_or_else(|| perr(no, format!("entry for train {t} at node {n} off its itinerary")))?;
        if entries[t.index()][pos].replace(e).is_some() {
            return Err(perr(no, "duplicate timetable entry"));
        }
    }
    let entries = entries
        .into_iter()
        .enumerate()
        .map(|(i, rows)| {
            rows.into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| perr(0, format!("timetable misses entries of train {i}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut sp: SpacingConstants<Option<T>> = SpacingConstants {
        node_gamma: vec![None; network.nodes.len()],
        edge_headway: vec![None; network.edges.len()],
        overrides: BTreeMap::new(),
    };
    let mut overrides = BTreeMap::new();
    for l in spacing.ok_or_else(|| perr(0, "missing spacing section"))? {
        match l.key() {
            "node-gamma" => {
                l.arity(3)?;
                let n: usize = l.num(1)?;
                *sp.node_gamma.get_mut(n).ok_or_else(|| perr(l.no, "unknown node"))? = Some(l.num(2)?);
            }
            "edge-headway" => {
                l.arity(3)?;
                let e: usize = l.num(1)?;
                *sp.edge_headway.get_mut(e).ok_or_else(|| perr(l.no, "unknown edge"))? = Some(l.num(2)?);
            }
            "gamma" => {
                l.arity(5)?;
                overrides.insert((TrainId(l.num(1)?), TrainId(l.num(2)?), NodeId(l.num(3)?)), l.num::<T>(4)?);
            }
            k => return Err(perr(l.no, format!("unexpected `{k}` in spacing"))),
        }
    }
    let spacing = SpacingConstants {
        node_gamma: sp
            .node_gamma
            .into_iter()
            .collect::<Option<Vec<T>>>()
            .ok_or_else(|| perr(0, "spacing needs a node-gamma for every node"))?,
        edge_headway: sp
            .edge_headway
            .into_iter()
            .collect::<Option<Vec<T>>>()
            .ok_or_else(|| perr(0, "spacing needs an edge-headway for every edge"))?,
        overrides,
    };

    Ok(Instance { network, trains, timetable: Timetable { entries }, spacing, perturbation })
}

fn parse_network<T: TimeScalar>(body: &[Line<'_>]) -> Result<Network<T>, FormatError> {
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges = Vec::new();
    let mut gates = Vec::new();
    let mut routes: Vec<(usize, NodeId, RouteTriplet)> = Vec::new();
    for l in body {
        match l.key() {
            "node" => {
                l.arity(4)?;
                nodes.push(Node { id: NodeId(l.num(1)?), platforms: l.named(2, "platforms")?, routes: vec![] });
            }
            "route" => {
                l.arity(5)?;
                routes.push((l.no, NodeId(l.num(1)?), RouteTriplet::new(l.num(2)?, l.num(3)?, l.num(4)?)));
            }
            "edge" => {
                l.arity(6)?;
                edges.push(Edge {
                    id: EdgeId(l.num(1)?),
                    endpoints: (NodeId(l.num(2)?), NodeId(l.num(3)?)),
                    tracks: l.named(4, "tracks")?,
                });
            }
            "gate" => {
                if l.words.len() < 10 || l.words[9 - 1] != "members" {
                    return Err(perr(l.no, "gate needs node, capacity, headway and members"));
                }
                let members = l.words[9..]
                    .iter()
                    .map(|m| {
                        let (e, t) = m.split_once(':').ok_or_else(|| perr(l.no, format!("bad member `{m}`")))?;
                        Ok((
                            EdgeId(e.parse().map_err(|_| perr(l.no, format!("bad member `{m}`")))?),
                            t.parse().map_err(|_| perr(l.no, format!("bad member `{m}`")))?,
                        ))
                    })
                    .collect::<Result<Vec<_>, FormatError>>()?;
                gates.push(Gate {
                    id: GateId(l.num(1)?),
                    node: NodeId(l.named(2, "node")?),
                    capacity: l.named(4, "capacity")?,
                    headway: l.named(6, "headway")?,
                    members,
                });
            }
            k => return Err(perr(l.no, format!("unexpected `{k}` in network"))),
        }
    }
    for (no, n, r) in routes {
        let node = nodes.iter_mut().find(|x| x.id == n).ok_or_else(|| perr(no, format!("route at unknown node {n}")))?;
        node.routes.push(r);
    }
    Ok(Network { nodes, edges, gates })
}

fn parse_trains<T: TimeScalar>(body: &[Line<'_>]) -> Result<Vec<Train<T>>, FormatError> {
    let mut trains = Vec::new();
    let mut i = 0;
    while i < body.len() {
        let head = &body[i];
        if head.key() != "begin" || head.words.get(1) != Some(&"train") {
            return Err(perr(head.no, "expected `begin train <id>`"));
        }
        head.arity(3)?;
        let id = TrainId(head.num(2)?);
        let mut itinerary: Option<Vec<NodeId>> = None;
        let mut stops = Vec::new();
        let mut runs = Vec::new();
        let mut connections = Vec::new();
        i += 1;
        while body[i].key() != "end" {
            let l = &body[i];
            match l.key() {
                "itinerary" => {
                    itinerary = Some((1..l.words.len()).map(|k| l.num(k).map(NodeId)).collect::<Result<_, _>>()?);
                }
                "stop" => {
                    l.arity(4)?;
                    stops.push((l.no, NodeId(l.num(1)?), StopBounds { min: l.num(2)?, max: l.num(3)? }));
                }
                "run" => {
                    l.arity(4)?;
                    runs.push((l.no, NodeId(l.num(1)?), NodeId(l.num(2)?), l.num::<T>(3)?));
                }
                "connection" => {
                    l.arity(4)?;
                    connections.push(Connection {
                        partner: TrainId(l.num(1)?),
                        node: NodeId(l.num(2)?),
                        min_transfer: l.num(3)?,
                    });
                }
                k => return Err(perr(l.no, format!("unexpected `{k}` in train {id}"))),
            }
            i += 1;
        }
        i += 1;
        let itinerary = itinerary.ok_or_else(|| perr(head.no, format!("train {id} has no itinerary")))?;
        let k = itinerary.len();
        let mut stop_rows = vec![None; k];
        for (no, n, s) in stops {
            let pos = itinerary.iter().position(|&x| x == n).ok_or_else(|| perr(no, "stop off itinerary"))?;
            stop_rows[pos] = Some(s);
        }
        let mut run_rows = vec![None; k.saturating_sub(1)];
        for (no, a, b, beta) in runs {
            let pos = itinerary
                .windows(2)
                .position(|w| w[0] == a && w[1] == b)
                .ok_or_else(|| perr(no, "run does not join consecutive itinerary nodes"))?;
            run_rows[pos] = Some(beta);
        }
        trains.push(Train {
            id,
            stops: stop_rows
                .into_iter()
                .collect::<Option<_>>()
                .ok_or_else(|| perr(head.no, format!("train {id} misses stop windows")))?,
            runs: run_rows
                .into_iter()
                .collect::<Option<_>>()
                .ok_or_else(|| perr(head.no, format!("train {id} misses running times")))?,
            itinerary,
            connections,
        });
    }
    Ok(trains)
}

fn write_entry<T: TimeScalar>(out: &mut String, train: TrainId, node: NodeId, e: &TimetableEntry<T>) {
    let r = e.route;
    let _ = writeln!(
        out,
        "  entry {train} {node} {} {} {} {} {}",
        e.arrival, e.departure, r.incoming, r.inner, r.outgoing
    );
}

/// Canonical text form of `inst`.
pub fn write_instance<T: TimeScalar>(inst: &Instance<T>) -> String {
    let mut o = String::new();
    o.push_str(INSTANCE_HEADER);
    o.push('\n');
    o.push_str("begin network\n");
    for n in &inst.network.nodes {
        let _ = writeln!(o, "  node {} platforms {}", n.id, n.platforms);
    }
    for n in &inst.network.nodes {
        for r in &n.routes {
            let _ = writeln!(o, "  route {} {} {} {}", n.id, r.incoming, r.inner, r.outgoing);
        }
    }
    for e in &inst.network.edges {
        let _ = writeln!(o, "  edge {} {} {} tracks {}", e.id, e.endpoints.0, e.endpoints.1, e.tracks);
    }
    for g in &inst.network.gates {
        let _ = write!(o, "  gate {} node {} capacity {} headway {} members", g.id, g.node, g.capacity, g.headway);
        for (e, t) in &g.members {
            let _ = write!(o, " {e}:{t}");
        }
        o.push('\n');
    }
    o.push_str("end\nbegin trains\n");
    for t in &inst.trains {
        let _ = writeln!(o, "  begin train {}", t.id);
        o.push_str("    itinerary");
        for n in &t.itinerary {
            let _ = write!(o, " {n}");
        }
        o.push('\n');
        for (n, s) in t.itinerary.iter().zip(&t.stops) {
            let _ = writeln!(o, "    stop {n} {} {}", s.min, s.max);
        }
        for (w, beta) in t.itinerary.windows(2).zip(&t.runs) {
            let _ = writeln!(o, "    run {} {} {beta}", w[0], w[1]);
        }
        for c in &t.connections {
            let _ = writeln!(o, "    connection {} {} {}", c.partner, c.node, c.min_transfer);
        }
        o.push_str("  end\n");
    }
    o.push_str("end\nbegin timetable\n");
    for t in &inst.trains {
        for (n, e) in t.itinerary.iter().zip(&inst.timetable.entries[t.id.index()]) {
            write_entry(&mut o, t.id, *n, e);
        }
    }
    o.push_str("end\nbegin spacing\n");
    for (i, g) in inst.spacing.node_gamma.iter().enumerate() {
        let _ = writeln!(o, "  node-gamma {i} {g}");
    }
    for (i, h) in inst.spacing.edge_headway.iter().enumerate() {
        let _ = writeln!(o, "  edge-headway {i} {h}");
    }
    for ((a, b, n), g) in &inst.spacing.overrides {
        let _ = writeln!(o, "  gamma {a} {b} {n} {g}");
    }
    o.push_str("end\n");
    if let Some(p) = &inst.perturbation {
        let _ = writeln!(o, "begin perturbation\n  delay {} {} {}\nend", p.train, p.node, p.delay);
    }
    o
}

/// A parsed schedule document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleDocument<T> {
    pub fitness: T,
    /// `[train]` → assignments along the itinerary, `None` if unscheduled.
    pub assignments: Vec<Option<Vec<Assignment<T>>>>,
    pub unscheduled: Vec<TrainId>,
    pub kick_count: Vec<u32>,
    pub insertion_order: Vec<TrainId>,
}

impl<T: TimeScalar> From<&ScheduleResult<T>> for ScheduleDocument<T> {
    fn from(r: &ScheduleResult<T>) -> Self {
        Self {
            fitness: r.fitness,
            assignments: r.assignments.clone(),
            unscheduled: r.unscheduled.iter().copied().collect(),
            kick_count: r.kick_count.clone(),
            insertion_order: r.insertion_order.clone(),
        }
    }
}

pub fn write_schedule<T: TimeScalar>(inst: &Instance<T>, result: &ScheduleResult<T>) -> String {
    write_schedule_document(inst, &ScheduleDocument::from(result))
}

pub fn write_schedule_document<T: TimeScalar>(inst: &Instance<T>, doc: &ScheduleDocument<T>) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "{SCHEDULE_HEADER}\nfitness {}\nbegin schedule", doc.fitness);
    for (i, rows) in doc.assignments.iter().enumerate() {
        let Some(rows) = rows else { continue };
        let t = &inst.trains[i];
        for (n, a) in t.itinerary.iter().zip(rows) {
            write_entry(&mut o, t.id, *n, &TimetableEntry { arrival: a.arrival, departure: a.departure, route: a.route });
        }
    }
    let list = |o: &mut String, key: &str, xs: &mut dyn Iterator<Item = String>| {
        o.push_str("  ");
        o.push_str(key);
        for x in xs {
            o.push(' ');
            o.push_str(&x);
        }
        o.push('\n');
    };
    list(&mut o, "unscheduled", &mut doc.unscheduled.iter().map(|t| t.to_string()));
    list(&mut o, "kicks", &mut doc.kick_count.iter().map(|k| k.to_string()));
    list(&mut o, "order", &mut doc.insertion_order.iter().map(|t| t.to_string()));
    o.push_str("end\n");
    o
}

/// Parse a schedule document against the instance it was produced for.
pub fn parse_schedule<T: TimeScalar>(inst: &Instance<T>, text: &str) -> Result<ScheduleDocument<T>, FormatError> {
    let lines = lex(text)?;
    check_header(&lines, SCHEDULE_HEADER)?;
    let Some(fit) = lines.get(1).filter(|l| l.key() == "fitness") else {
        return Err(perr(lines.get(1).map_or(0, |l| l.no), "expected `fitness`"));
    };
    fit.arity(2)?;
    let fitness = fit.num(1)?;
    let secs = sections(&lines[2..])?;
    let [(head, body)] = secs.as_slice() else {
        return Err(perr(0, "expected exactly one schedule section"));
    };
    if head.words.get(1) != Some(&"schedule") {
        return Err(perr(head.no, "expected `begin schedule`"));
    }
    let n = inst.trains.len();
    let mut rows: Vec<Vec<Option<Assignment<T>>>> = inst.trains.iter().map(|t| vec![None; t.itinerary.len()]).collect();
    let ids = |l: &Line<'_>| (1..l.words.len()).map(|k| l.num(k).map(TrainId)).collect::<Result<Vec<_>, _>>();
    let mut unscheduled = Vec::new();
    let mut kick_count = vec![0; n];
    let mut insertion_order = Vec::new();
    for l in body.iter() {
        match l.key() {
            "entry" => {
                let (t, node, e) = parse_entry::<T>(l)?;
                let pos = inst
                    .trains
                    .get(t.index())
                    .and_then(|tr| tr.position_of(node))
                    .ok_or_else(|| perr(l.no, "entry off itinerary"))?;
                rows[t.index()][pos] = Some(Assignment { arrival: e.arrival, departure: e.departure, route: e.route });
            }
            "unscheduled" => unscheduled = ids(l)?,
            "kicks" => {
                kick_count = (1..l.words.len()).map(|k| l.num(k)).collect::<Result<_, _>>()?;
                if kick_count.len() != n {
                    return Err(perr(l.no, "kicks needs one count per train"));
                }
            }
            "order" => insertion_order = ids(l)?,
            k => return Err(perr(l.no, format!("unexpected `{k}` in schedule"))),
        }
    }
    let assignments = rows
        .into_iter()
        .map(|r| {
            if r.iter().all(Option::is_none) {
                None
            } else {
                r.into_iter().collect::<Option<Vec<_>>>()
            }
        })
        .collect();
    Ok(ScheduleDocument { fitness, assignments, unscheduled, kick_count, insertion_order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rail_model::fixtures::*;

    fn sample() -> Instance<i64> {
        let mut net = line_network(3, 2, 2);
        net.gates.push(Gate {
            id: GateId(0),
            node: NodeId(1),
            members: vec![(EdgeId(0), 1), (EdgeId(1), 0)],
            capacity: 1,
            headway: 20,
        });
        let mut inst = instance(
            net,
            vec![simple_train(0, &[0, 1, 2], 25200, 120, 30, 300), simple_train(1, &[2, 1, 0], 25300, 120, 30, 300)],
            60,
            90,
        );
        inst.trains[1].connections.push(Connection { partner: TrainId(0), node: NodeId(1), min_transfer: 120 });
        inst.spacing.overrides.insert((TrainId(0), TrainId(1), NodeId(1)), 75);
        inst.perturbation = Some(Perturbation { train: TrainId(0), node: NodeId(0), delay: 600 });
        inst
    }

    #[test]
    fn instance_round_trip_is_bit_exact() {
        let inst = sample();
        let text = write_instance(&inst);
        let back: Instance<i64> = parse_instance(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(write_instance(&back), text);
    }

    #[test]
    fn minimal_document_loads() {
        let doc = "railopt-instance 1
begin network
  node 0 platforms 1
  node 1 platforms 1
  route 0 0 0 0
  route 1 0 0 0
  edge 0 0 1 tracks 1
end
begin trains
  begin train 0
    itinerary 0 1
    stop 0 0 60
    stop 1 0 60
    run 0 1 120
  end
end
begin timetable
  entry 0 0 100 100 0 0 0
  entry 0 1 220 220 0 0 0
end
begin spacing
  node-gamma 0 30
  node-gamma 1 30
  edge-headway 0 60
end
";
        let inst: Instance<i64> = load_instance(doc).unwrap();
        assert_eq!(inst.network.nodes.len(), 2);
        assert_eq!(inst.network.edges.len(), 1);
        assert_eq!(inst.network.edges[0].tracks, 1);
        assert_eq!(inst.trains.len(), 1);
        assert_eq!(write_instance(&inst), doc);
    }

    #[test]
    fn route_to_missing_track_fails_validation() {
        let doc = write_instance(&sample()).replace("route 2 1 1 1", "route 2 3 1 1");
        let err = load_instance::<i64>(&doc).unwrap_err();
        assert!(matches!(err, FormatError::Model(ModelError::Invalid { .. })), "{err}");
    }

    #[test]
    fn malformed_documents_report_lines() {
        assert!(matches!(parse_instance::<i64>("nonsense"), Err(FormatError::Parse { line: 1, .. })));
        let text = write_instance(&sample()).replace("tracks 2", "tracks two");
        assert!(matches!(parse_instance::<i64>(&text), Err(FormatError::Parse { .. })));
        let text = write_instance(&sample()).replacen("end\n", "", 1);
        assert!(parse_instance::<i64>(&text).is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = write_instance(&sample());
        let noisy = text.replace("begin spacing\n", "\n# spacing follows\nbegin spacing   # here\n");
        assert_eq!(parse_instance::<i64>(&noisy).unwrap(), sample());
    }

    #[test]
    fn i32_clock_parses_same_document() {
        let text = write_instance(&sample());
        let narrow: Instance<i32> = parse_instance(&text).unwrap();
        assert_eq!(write_instance(&narrow), text);
    }
}
