//! Space/time diagrams.
//!
//! Time runs left to right with one user unit per second, nodes of the chosen
//! path run top to bottom. A train is one polyline per maximal stretch of its
//! itinerary that follows the path; dwells are horizontal segments.

use std::fmt::Write as _;

use railopt_core::rail_model::{Assignment, Instance, NodeId, TrainId};
use railopt_core::TimeScalar;

#[derive(Debug, Clone)]
pub struct SpaceTimeOptions {
    /// Vertical distance between consecutive path nodes, in user units.
    pub row_height: i64,
    /// Drawn in the highlight colour.
    pub highlight: Vec<TrainId>,
    pub title: Option<String>,
}

impl Default for SpaceTimeOptions {
    fn default() -> Self {
        Self { row_height: 600, highlight: Vec::new(), title: None }
    }
}

const MARGIN_LEFT: i64 = 900;
const MARGIN: i64 = 300;
const TICK: i64 = 1800;

/// The longest itinerary, a reasonable default path.
pub fn default_path<T: TimeScalar>(instance: &Instance<T>) -> Vec<NodeId> {
    instance
        .trains
        .iter()
        .max_by_key(|t| (t.itinerary.len(), std::cmp::Reverse(t.id)))
        .map(|t| t.itinerary.clone())
        .unwrap_or_default()
}

fn clock(t: i64) -> String {
    let t = t.rem_euclid(24 * 3600);
    format!("{:02}:{:02}", t / 3600, t / 60 % 60)
}

/// Polylines of one train, as `(time, row)` points.
fn strokes<T: TimeScalar>(instance: &Instance<T>, train: TrainId, rows: &[Assignment<T>], path: &[NodeId]) -> Vec<Vec<(i64, i64)>> {
    let row_of = |n: NodeId| path.iter().position(|&p| p == n).map(|r| r as i64);
    let itinerary = &instance.train(train).itinerary;
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < itinerary.len() {
        let Some(first) = row_of(itinerary[pos]) else {
            pos += 1;
            continue;
        };
        let mut end = pos;
        let mut last = first;
        while end + 1 < itinerary.len() {
            match row_of(itinerary[end + 1]) {
                Some(r) if (r - last).abs() == 1 => {
                    last = r;
                    end += 1;
                }
                _ => break,
            }
        }
        if end > pos {
            let mut pts = Vec::new();
            for p in pos..=end {
                let r = row_of(itinerary[p]).expect("on path");
                pts.push((rows[p].arrival.as_f64() as i64, r));
                if p < end {
                    pts.push((rows[p].departure.as_f64() as i64, r));
                }
            }
            out.push(pts);
        }
        pos = end + 1;
    }
    out
}

/// Render the scheduled trains of `assignments` along `path` as SVG 1.1.
///
/// Trains that share no edge with the path are skipped with a warning.
pub fn emit_space_time<T: TimeScalar>(
    instance: &Instance<T>,
    assignments: &[Option<Vec<Assignment<T>>>],
    path: &[NodeId],
    options: &SpaceTimeOptions,
) -> String {
    let mut lines: Vec<(TrainId, Vec<Vec<(i64, i64)>>)> = Vec::new();
    for (i, rows) in assignments.iter().enumerate() {
        let Some(rows) = rows else { continue };
        let t = TrainId(i as u32);
        let s = strokes(instance, t, rows, path);
        if s.is_empty() {
            log::warn!("train {t} does not run along the plotted path, skipped");
            continue;
        }
        lines.push((t, s));
    }
    let times = lines.iter().flat_map(|(_, s)| s.iter().flatten().map(|p| p.0));
    let (t_lo, t_hi) = times.fold((i64::MAX, i64::MIN), |(lo, hi), t| (lo.min(t), hi.max(t)));
    let (t_lo, t_hi) = if t_lo > t_hi { (0, TICK) } else { (t_lo.div_euclid(TICK) * TICK, (t_hi.div_euclid(TICK) + 1) * TICK) };
    let h = options.row_height;
    let width = MARGIN_LEFT + (t_hi - t_lo) + MARGIN;
    let height = 2 * MARGIN + h * (path.len().max(1) as i64 - 1);
    let x = |t: i64| MARGIN_LEFT + t - t_lo;
    let y = |r: i64| MARGIN + r * h;
    let font = h / 4;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="0 0 {width} {height}" width="{}" height="{}">"#,
        width / 10,
        height / 10
    );
    if let Some(title) = &options.title {
        let _ = writeln!(s, "<title>{}</title>", escape(title));
    }
    let _ = writeln!(s, r##"<g stroke="#cccccc" stroke-width="4" font-family="sans-serif" font-size="{font}">"##);
    for (r, n) in path.iter().enumerate() {
        let yy = y(r as i64);
        let _ = writeln!(s, r#"<line x1="{}" y1="{yy}" x2="{}" y2="{yy}"/>"#, x(t_lo), x(t_hi));
        let _ = writeln!(s, r#"<text x="{}" y="{yy}" stroke="none" fill="black">node {n}</text>"#, MARGIN / 2);
    }
    let mut tick = t_lo;
    while tick <= t_hi {
        let _ = writeln!(s, r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}"/>"#, x(tick), y(0), y(path.len() as i64 - 1).max(y(0)));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" stroke="none" fill="black">{}</text>"#,
            x(tick),
            MARGIN / 2,
            clock(tick)
        );
        tick += TICK;
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g fill="none" stroke-linejoin="round">"#);
    for (t, strokes) in &lines {
        let hi = options.highlight.contains(t);
        let (colour, width) = if hi { ("#d62728", 24) } else { ("#1f3a93", 10) };
        for pts in strokes {
            let points: Vec<String> = pts.iter().map(|&(t, r)| format!("{},{}", x(t), y(r))).collect();
            let _ = writeln!(
                s,
                r#"<polyline id="train-{t}" stroke="{colour}" stroke-width="{width}" points="{}"/>"#,
                points.join(" ")
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
