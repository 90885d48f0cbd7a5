use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cotrack::energy::Category;
use cotrack::movement::generate_trace;
use cotrack::protocol::write_events;
use cotrack::schemes::{run_scheme_with, RunOptions, RunResult, SchemeConfig, SchemeKind};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::figures::{emit_figure_data, Figure};
use crate::plan::ExperimentPlan;
use crate::table::{sig6, write_atomic};

pub const AGGREGATE_HEADER: &str =
    "scheme,sweep_value,mean_energy_j,std_energy_j,mean_error_m,std_error_m,mean_fixes,mean_clusters";
pub const PER_RUN_HEADER: &str =
    "node_id,mean_error_m,energy_gps_j,energy_tx_j,energy_rx_j,energy_accmag_j,energy_misc_j,fixes,alive_s";

/// One scheme at one sweep value, summarised over its repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scheme: SchemeKind,
    pub sweep_value: f64,
    pub mean_energy_j: f64,
    pub std_energy_j: f64,
    pub mean_error_m: f64,
    pub std_error_m: f64,
    pub mean_fixes: f64,
    pub mean_clusters: f64,
    pub reps: usize,
}

impl AggregateRow {
    pub fn from_runs(scheme: &SchemeConfig, runs: &[&RunResult]) -> Self {
        let energy: Vec<f64> = runs.iter().map(|r| r.mean_energy_j).collect();
        let error: Vec<f64> = runs.iter().map(|r| r.mean_error_m).collect();
        let (mean_energy_j, std_energy_j) = mean_sample_std(&energy);
        let (mean_error_m, std_error_m) = mean_sample_std(&error);
        let n = runs.len().max(1) as f64;
        Self {
            scheme: scheme.kind,
            sweep_value: scheme.sweep_value(),
            mean_energy_j,
            std_energy_j,
            mean_error_m,
            std_error_m,
            mean_fixes: runs.iter().map(|r| r.mean_fixes).sum::<f64>() / n,
            mean_clusters: runs.iter().map(|r| r.mean_clusters).sum::<f64>() / n,
            reps: runs.len(),
        }
    }

    pub fn csv_line(&self) -> String {
        [
            self.scheme.name().to_string(),
            sig6(self.sweep_value),
            sig6(self.mean_energy_j),
            sig6(self.std_energy_j),
            sig6(self.mean_error_m),
            sig6(self.std_error_m),
            sig6(self.mean_fixes),
            sig6(self.mean_clusters),
        ]
        .join(",")
    }
}

/// Mean and sample (n - 1) standard deviation; a single value has zero spread.
pub fn mean_sample_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Parses an aggregate CSV written by [`aggregate_csv`]. Repetition counts are not stored and read back as 0.
pub fn parse_aggregate_csv(text: &str) -> Result<Vec<AggregateRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(AGGREGATE_HEADER) {
        return Err(Error::plan("aggregate", "header does not match"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |why: String| Error::plan("aggregate", format!("row {}: {why}", i + 1));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 8 {
                return Err(bad(format!("expected 8 columns, got {}", cols.len())));
            }
            let scheme: SchemeKind = cols[0].parse().map_err(|e: cotrack::Error| bad(e.to_string()))?;
            let mut v = [0.0; 7];
            for (slot, c) in v.iter_mut().zip(&cols[1..]) {
                *slot = c.parse().map_err(|_| bad(format!("`{c}` is not a number")))?;
            }
            Ok(AggregateRow {
                scheme,
                sweep_value: v[0],
                mean_energy_j: v[1],
                std_energy_j: v[2],
                mean_error_m: v[3],
                std_error_m: v[4],
                mean_fixes: v[5],
                mean_clusters: v[6],
                reps: 0,
            })
        })
        .collect()
}

pub fn per_run_csv(run: &RunResult) -> String {
    let mut out = String::from(PER_RUN_HEADER);
    out.push('\n');
    for (i, n) in run.nodes.iter().enumerate() {
        let e = |c| sig6(n.energy(c));
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{}",
            sig6(n.mean_error_m),
            e(Category::Gps),
            e(Category::Tx),
            e(Category::Rx),
            e(Category::AccMag),
            e(Category::Misc),
            n.fixes,
            sig6(n.alive_s)
        );
    }
    out
}

/// File stem shared by a run's per-run and event files.
pub fn run_stem(cell: &SchemeConfig, seed: u64) -> String {
    format!("{}_{}_seed{}", cell.kind.name(), sig6(cell.sweep_value()), seed)
}

/// One finished run. Events are dropped after being written.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub cell: SchemeConfig,
    pub rep: usize,
    pub seed: u64,
    pub result: RunResult,
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub aggregates: Vec<AggregateRow>,
    pub runs: Vec<RunRecord>,
    pub files: Vec<PathBuf>,
}

impl PlanOutput {
    pub fn all_conserved(&self) -> bool {
        self.runs.iter().all(|r| r.result.conserved())
    }
}

fn run_cell(
    plan: &ExperimentPlan,
    out: &Path,
    trace: &cotrack::movement::GroundTruthTrace,
    cell: &SchemeConfig,
    rep: usize,
) -> Result<RunRecord> {
    let seed = plan.seed(rep);
    let opts = RunOptions {
        keep_tracks: false,
        record_events: plan.emit_events,
    };
    let mut result = run_scheme_with(trace, cell, &plan.sim_params(), seed, opts)?;
    let stem = run_stem(cell, seed);
    if plan.per_run {
        write_atomic(
            &out.join("runs").join(format!("{stem}.csv")),
            per_run_csv(&result).as_bytes(),
        )?;
    }
    if plan.emit_events {
        let mut buf = Vec::new();
        write_events(&result.events, &mut buf)?;
        write_atomic(&out.join("events").join(format!("{stem}.csv")), &buf)?;
        result.events = Vec::new();
    }
    Ok(RunRecord {
        cell: *cell,
        rep,
        seed,
        result,
    })
}

/// Runs every cell of `plan` for every repetition and writes the results under `plan.out`.
///
/// Repetitions run one after another so only one trace is held in memory;
/// the cells of a repetition run on up to `plan.jobs` threads.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanOutput> {
    let cells = plan.cells()?;
    let out = plan.out.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| Error::plan("jobs", e.to_string()))?;

    let mut runs = Vec::with_capacity(cells.len() * plan.reps);
    for rep in 0..plan.reps {
        let seed = plan.seed(rep);
        let trace = generate_trace(&plan.movement, seed)?;
        if plan.emit_trace {
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            write_atomic(&out.join("traces").join(format!("trace_seed{seed}.csv")), &buf)?;
        }
        let batch: Vec<Result<RunRecord>> =
            pool.install(|| cells.par_iter().map(|c| run_cell(plan, out, &trace, c, rep)).collect());
        for r in batch {
            runs.push(r?);
        }
    }

    let aggregates: Vec<AggregateRow> = cells
        .iter()
        .map(|c| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.cell == *c).map(|r| &r.result).collect();
            AggregateRow::from_runs(c, &mine)
        })
        .collect();
    let agg_path = out.join("aggregate.csv");
    write_atomic(&agg_path, aggregate_csv(&aggregates).as_bytes())?;

    let mut files = vec![agg_path];
    let figures: Vec<Figure> = Figure::ALL
        .into_iter()
        .filter(|f| aggregates.iter().any(|a| a.scheme.is_dynamic() == f.is_dynamic()))
        .collect();
    files.extend(emit_figure_data(&aggregates, &figures, &out.join("figures"))?);
    Ok(PlanOutput {
        aggregates,
        runs,
        files,
    })
}
