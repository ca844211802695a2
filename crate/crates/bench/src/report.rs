//! Aggregation of a results directory.
//!
//! Everything is recomputed from the stored `trace.csv` files; the fitness
//! column of the manifest is only used to cross-check them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use railopt_core::ea::TRACE_CSV_HEADER;

use crate::plan::{Manifest, PlanError, MANIFEST_FILE};
use crate::stats::{wilcoxon_rank_sum, RankSum};

/// Significance level of the dominance verdicts.
pub const ALPHA: f64 = 0.01;

pub const SUMMARY_CSV_HEADER: &str = "instance,variant,runs,mean_final,median_final,best_final";
pub const PAIRS_CSV_HEADER: &str = "instance,variant_a,variant_b,rank_sum,p_value,exact,verdict";
pub const CURVES_CSV_HEADER: &str = "instance,variant,generation,runs,mean_best,mean_mean";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0}: no manifest, not a results directory")]
    NoManifest(PathBuf),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("no usable traces in {0}")]
    Empty(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One parsed trace row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub generation: u32,
    pub best: f64,
    pub mean: f64,
    pub evals: u64,
}

/// Parse a trace CSV.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_CSV_HEADER) {
        return Err("unexpected header".into());
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || format!("row {}: `{line}`", k + 1);
        if f.len() != 5 {
            return Err(bad());
        }
        let row = TraceRow {
            generation: f[0].parse().map_err(|_| bad())?,
            best: f[1].parse().map_err(|_| bad())?,
            mean: f[2].parse().map_err(|_| bad())?,
            evals: f[4].parse().map_err(|_| bad())?,
        };
        if row.generation as usize != rows.len() {
            return Err(bad());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no rows".into());
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    ABetter,
    BBetter,
    Indistinct,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ABetter => "a_better",
            Self::BBetter => "b_better",
            Self::Indistinct => "indistinct",
        }
    }
}

/// Verdict for lower-is-better samples `a` and `b`.
pub fn verdict(test: &RankSum) -> Verdict {
    if test.p_value >= ALPHA {
        Verdict::Indistinct
    } else if test.shift < 0.0 {
        Verdict::ABetter
    } else {
        Verdict::BBetter
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub generation: u32,
    /// Runs that reached this generation.
    pub runs: usize,
    pub mean_best: f64,
    pub mean_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub instance: String,
    pub variant: String,
    pub finals: Vec<f64>,
    pub mean_final: f64,
    pub median_final: f64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub instance: String,
    pub a: String,
    pub b: String,
    pub test: RankSum,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub variants: Vec<VariantSummary>,
    pub pairs: Vec<PairComparison>,
    /// Cells left out, with the reason.
    pub excluded: Vec<(String, String)>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Per-generation means over `traces`; a generation is averaged over the runs
/// that reached it.
pub fn mean_curve(traces: &[Vec<TraceRow>]) -> Vec<CurvePoint> {
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|g| {
            let rows: Vec<&TraceRow> = traces.iter().filter_map(|t| t.get(g)).collect();
            let n = rows.len() as f64;
            CurvePoint {
                generation: g as u32,
                runs: rows.len(),
                mean_best: rows.iter().map(|r| r.best).sum::<f64>() / n,
                mean_mean: rows.iter().map(|r| r.mean).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Read every trace listed in the manifest of `dir` and compare the variants
/// pairwise on each instance by final best fitness.
pub fn summarize(dir: &Path) -> Result<ComparisonReport, ReportError> {
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(ReportError::NoManifest(dir.to_owned()));
    }
    let manifest = Manifest::load(dir)?;
    // instance -> variant -> traces, in manifest order.
    let mut groups: BTreeMap<(usize, usize), (String, String, Vec<Vec<TraceRow>>)> = BTreeMap::new();
    let mut excluded = Vec::new();
    let inst_order = |label: &str| manifest.instances.iter().position(|i| i.label == label).unwrap_or(usize::MAX);
    let var_order = |name: &str| manifest.plan.variants.iter().position(|v| v.name == name).unwrap_or(usize::MAX);
    for cell in &manifest.cells {
        let id = format!("{}/{}/run_{}", cell.instance, cell.variant, cell.run);
        if cell.status != "ok" {
            excluded.push((id, format!("run failed: {}", cell.status)));
            continue;
        }
        let path = dir.join(&cell.dir).join("trace.csv");
        let trace = match fs::read_to_string(&path).map_err(|e| e.to_string()).and_then(|t| parse_trace(&t)) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("{}: {e}, excluded", path.display());
                excluded.push((id, e));
                continue;
            }
        };
        let last = trace.last().expect("non-empty").best;
        if cell.final_fitness.is_some_and(|f| f as f64 != last) {
            excluded.push((id, "trace disagrees with the manifest".into()));
            continue;
        }
        groups
            .entry((inst_order(&cell.instance), var_order(&cell.variant)))
            .or_insert_with(|| (cell.instance.clone(), cell.variant.clone(), Vec::new()))
            .2
            .push(trace);
    }
    if groups.is_empty() {
        return Err(ReportError::Empty(dir.to_owned()));
    }
    let variants: Vec<VariantSummary> = groups
        .into_values()
        .map(|(instance, variant, traces)| {
            let finals: Vec<f64> = traces.iter().map(|t| t.last().expect("non-empty").best).collect();
            VariantSummary {
                mean_final: finals.iter().sum::<f64>() / finals.len() as f64,
                median_final: median(&finals),
                curve: mean_curve(&traces),
                finals,
                instance,
                variant,
            }
        })
        .collect();
    let mut pairs = Vec::new();
    for (i, a) in variants.iter().enumerate() {
        for b in variants[i + 1..].iter().filter(|b| b.instance == a.instance) {
            let test = wilcoxon_rank_sum(&a.finals, &b.finals);
            pairs.push(PairComparison {
                instance: a.instance.clone(),
                a: a.variant.clone(),
                b: b.variant.clone(),
                verdict: verdict(&test),
                test,
            });
        }
    }
    Ok(ComparisonReport { variants, pairs, excluded })
}

impl ComparisonReport {
    pub fn summary_csv(&self) -> String {
        let mut s = format!("{SUMMARY_CSV_HEADER}\n");
        for v in &self.variants {
            let best = v.finals.iter().copied().fold(f64::INFINITY, f64::min);
            let _ = writeln!(s, "{},{},{},{:.6},{:.6},{}", v.instance, v.variant, v.finals.len(), v.mean_final, v.median_final, best);
        }
        s
    }

    pub fn pairs_csv(&self) -> String {
        let mut s = format!("{PAIRS_CSV_HEADER}\n");
        for p in &self.pairs {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6e},{},{}",
                p.instance,
                p.a,
                p.b,
                p.test.statistic,
                p.test.p_value,
                p.test.exact,
                p.verdict.as_str()
            );
        }
        s
    }

    pub fn curves_csv(&self) -> String {
        let mut s = format!("{CURVES_CSV_HEADER}\n");
        for v in &self.variants {
            for c in &v.curve {
                let _ = writeln!(s, "{},{},{},{},{:.6},{:.6}", v.instance, v.variant, c.generation, c.runs, c.mean_best, c.mean_mean);
            }
        }
        s
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let mut current = None;
        for v in &self.variants {
            if current != Some(&v.instance) {
                let _ = writeln!(s, "instance {}", v.instance);
                current = Some(&v.instance);
            }
            let _ = writeln!(
                s,
                "  {:<8} runs {:>3}  mean {:>14.1}  median {:>14.1}",
                v.variant,
                v.finals.len(),
                v.mean_final,
                v.median_final
            );
        }
        if !self.pairs.is_empty() {
            let _ = writeln!(s, "rank-sum comparisons at {}%:", (1.0 - ALPHA) * 100.0);
        }
        for p in &self.pairs {
            let who = match p.verdict {
                Verdict::ABetter => format!("{} better", p.a),
                Verdict::BBetter => format!("{} better", p.b),
                Verdict::Indistinct => "no difference".into(),
            };
            let _ = writeln!(s, "  {}: {} vs {}  p = {:.3e}  {who}", p.instance, p.a, p.b, p.test.p_value);
        }
        for (id, why) in &self.excluded {
            let _ = writeln!(s, "excluded {id}: {why}");
        }
        s
    }

    /// Write `report.txt`, `summary.csv`, `pairs.csv` and `curves.csv`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::write(dir.join("report.txt"), self.text())?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        fs::write(dir.join("pairs.csv"), self.pairs_csv())?;
        fs::write(dir.join("curves.csv"), self.curves_csv())
    }
}
