//! Seed sweeps over several solver configs, with CSV artifacts.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::oracle::OptimumCertificate;
use crate::linalg::Vector;
use crate::problem::Problem;
use crate::solvers::{run, SolveTrace, SolverConfig};

#[derive(Debug, Clone)]
pub struct RaceEntry {
    pub label: String,
    pub config: SolverConfig,
}

impl RaceEntry {
    pub fn new(label: impl Into<String>, config: SolverConfig) -> Self {
        Self { label: label.into(), config }
    }
}

/// One (entry, seed) run. Solver errors are kept as text so one bad cell
/// does not sink the race.
#[derive(Debug, Clone)]
pub struct RaceCell {
    pub label: String,
    pub seed: u64,
    pub outcome: std::result::Result<SolveTrace, String>,
}

/// Row of a per-run trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub epoch: f64,
    pub f: f64,
    pub gap: Option<f64>,
    pub dist: Option<f64>,
    pub inner_iters: usize,
    pub refreshed: Option<usize>,
    pub elapsed_s: f64,
}

/// Across-seed statistics at one whole epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub epoch: usize,
    pub runs: usize,
    pub mean_f: f64,
    pub std_f: f64,
    pub mean_gap: Option<f64>,
    pub std_gap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RaceReport {
    pub cells: Vec<RaceCell>,
    pub summary: Vec<SummaryRow>,
}

impl RaceReport {
    /// Summary rows of one entry, by epoch.
    pub fn rows_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a SummaryRow> + 'a {
        self.summary.iter().filter(move |r| r.label == label)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RaceCell> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }
}

pub fn trace_rows(trace: &SolveTrace, oracle: Option<&OptimumCertificate>) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .map(|r| TraceRow {
            k: r.k,
            epoch: r.epoch,
            f: r.objective,
            gap: oracle.map(|o| r.objective - o.f),
            dist: r.dist,
            inner_iters: r.inner_iters,
            refreshed: r.refreshed,
            elapsed_s: r.elapsed_s,
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

/// Runs every entry for `epochs` passes under every seed, concurrently.
///
/// Each entry's `reference` is set from `oracle` when one is given. With
/// `out_dir`, writes `<label>_seed<seed>.csv` per run and `summary.csv`.
pub fn race(
    problem: &Problem,
    entries: &[RaceEntry],
    seeds: &[u64],
    epochs: usize,
    x0: &Vector,
    oracle: Option<&OptimumCertificate>,
    out_dir: Option<&Path>,
) -> Result<RaceReport> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let jobs: Vec<(&RaceEntry, u64)> = entries.iter().flat_map(|e| seeds.iter().map(move |&s| (e, s))).collect();
    let cells: Vec<RaceCell> = jobs
        .par_iter()
        .map(|&(entry, seed)| {
            let mut config = entry.config.clone().with_seed(seed).with_epochs(problem, epochs);
            if let Some(o) = oracle {
                config.reference = Some(o.x.clone());
            }
            let outcome = run(problem, &config, x0).map_err(|e| e.to_string());
            RaceCell { label: entry.label.clone(), seed, outcome }
        })
        .collect();

    if let Some(dir) = out_dir {
        cells.par_iter().try_for_each(|cell| -> Result<()> {
            if let Ok(trace) = &cell.outcome {
                write_csv(dir.join(format!("{}_seed{}.csv", cell.label, cell.seed)), &trace_rows(trace, oracle))?;
            }
            Ok(())
        })?;
    }

    let mut summary = Vec::new();
    for entry in entries {
        let traces: Vec<&SolveTrace> =
            cells.iter().filter(|c| c.label == entry.label).filter_map(|c| c.outcome.as_ref().ok()).collect();
        if traces.is_empty() {
            continue;
        }
        for epoch in 0..=epochs {
            let fs: Vec<f64> = traces.iter().filter_map(|t| objective_at_epoch(t, epoch as f64)).collect();
            if fs.is_empty() {
                continue;
            }
            let (mean_f, std_f) = mean_std(&fs);
            let (mean_gap, std_gap) = match oracle {
                Some(o) => {
                    let gaps: Vec<f64> = fs.iter().map(|f| f - o.f).collect();
                    let (m, s) = mean_std(&gaps);
                    (Some(m), Some(s))
                }
                None => (None, None),
            };
            summary.push(SummaryRow { label: entry.label.clone(), epoch, runs: fs.len(), mean_f, std_f, mean_gap, std_gap });
        }
    }
    if let Some(dir) = out_dir {
        write_csv(dir.join("summary.csv"), &summary)?;
    }
    Ok(RaceReport { cells, summary })
}

/// Objective of the last record at or before `epoch`, if the run got there
/// or stopped early on convergence.
fn objective_at_epoch(trace: &SolveTrace, epoch: f64) -> Option<f64> {
    if trace.last().epoch < epoch && !trace.converged {
        return None;
    }
    trace.records.iter().take_while(|r| r.epoch <= epoch).last().map(|r| r.objective)
}

/// Mean and population standard deviation.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
