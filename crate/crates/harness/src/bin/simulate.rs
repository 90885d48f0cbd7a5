use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use cotrack_harness::{run_plan, Category, ExperimentPlan};

/// Sweep tracking schemes over intervals or limits and paired seeds.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Cli {
    /// TOML plan; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    category: Option<Category>,
    /// Comma-separated scheme names, e.g. individual,cluster_standard.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed; repetition i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write each repetition's ground-truth trace.
    #[arg(long)]
    emit_trace: bool,
    /// Also write each run's protocol event log.
    #[arg(long)]
    emit_events: bool,
}

fn build_plan(cli: Cli) -> cotrack_harness::Result<ExperimentPlan> {
    let mut plan = match &cli.config {
        Some(path) => ExperimentPlan::load(path)?,
        None => ExperimentPlan::default(),
    };
    if let Some(c) = cli.category {
        plan.category = c;
    }
    if let Some(s) = cli.schemes {
        plan.schemes = s;
    }
    if let Some(r) = cli.reps {
        plan.reps = r;
    }
    if let Some(s) = cli.seed {
        plan.base_seed = s;
    }
    if let Some(j) = cli.jobs {
        plan.jobs = j;
    }
    if let Some(o) = cli.out {
        plan.out = o;
    }
    plan.emit_trace |= cli.emit_trace;
    plan.emit_events |= cli.emit_events;
    Ok(plan)
}

fn main() -> ExitCode {
    let started = Instant::now();
    let result = build_plan(Cli::parse()).and_then(|plan| run_plan(&plan));
    match result {
        Ok(out) => {
            println!(
                "{:<20} {:>8} {:>12} {:>10} {:>10}",
                "scheme", "value", "energy J", "error m", "fixes"
            );
            for a in &out.aggregates {
                println!(
                    "{:<20} {:>8} {:>12.2} {:>10.2} {:>10.1}",
                    a.scheme.name(),
                    a.sweep_value,
                    a.mean_energy_j,
                    a.mean_error_m,
                    a.mean_fixes
                );
            }
            println!("{} runs in {:.1?}", out.runs.len(), started.elapsed());
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if !out.all_conserved() {
                eprintln!("error: energy conservation violated in at least one run");
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
