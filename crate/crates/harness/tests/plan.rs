use std::path::{Path, PathBuf};

use cotrack::energy::Category as EnergyCategory;
use cotrack::movement::FlockConfig;
use cotrack_harness::run::{mean_sample_std, parse_aggregate_csv, run_stem, PER_RUN_HEADER};
use cotrack_harness::{run_plan, Category, Error, ExperimentPlan};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cotrack-plan-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn small(name: &str) -> ExperimentPlan {
    ExperimentPlan {
        reps: 2,
        base_seed: 7,
        out: scratch(name),
        movement: FlockConfig {
            n_nodes: 6,
            duration_s: 1200,
            ..FlockConfig::default()
        },
        ..ExperimentPlan::default()
    }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn one_cell_two_reps_gives_one_row() {
    let plan = ExperimentPlan {
        category: Category::Periodic,
        schemes: vec!["cluster_standard".into()],
        intervals: vec![20.0],
        ..small("one-cell")
    };
    let out = run_plan(&plan).unwrap();
    assert_eq!(out.runs.len(), 2);
    assert_eq!(out.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![7, 8]);
    let text = read(&plan.out.join("aggregate.csv"));
    let rows = parse_aggregate_csv(&text).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(out.aggregates[0].reps, 2);
    let _ = std::fs::remove_dir_all(&plan.out);
}

#[test]
fn repeated_plans_are_byte_identical_at_any_job_count() {
    let plan = ExperimentPlan {
        intervals: vec![30.0],
        limits: vec![100.0],
        ..small("repeat")
    };
    run_plan(&plan).unwrap();
    let first = read(&plan.out.join("aggregate.csv"));
    let parallel = ExperimentPlan {
        jobs: 3,
        out: scratch("repeat-par"),
        ..plan.clone()
    };
    run_plan(&parallel).unwrap();
    assert_eq!(first, read(&parallel.out.join("aggregate.csv")));
    for f in [
        "energy_vs_interval",
        "error_vs_interval",
        "error_vs_energy_periodic",
        "error_vs_energy_dynamic",
    ] {
        let name = format!("figures/{f}.csv");
        assert_eq!(read(&plan.out.join(&name)), read(&parallel.out.join(&name)), "{f}");
    }
    let _ = std::fs::remove_dir_all(&plan.out);
    let _ = std::fs::remove_dir_all(&parallel.out);
}

#[test]
fn aggregates_match_the_per_run_files() {
    let plan = ExperimentPlan {
        category: Category::Both,
        schemes: vec![
            "individual".into(),
            "cluster_ckf_accmag".into(),
            "dyn_baseline_vm".into(),
        ],
        intervals: vec![10.0, 50.0],
        limits: vec![150.0],
        reps: 3,
        ..small("cross")
    };
    let out = run_plan(&plan).unwrap();
    let rows = parse_aggregate_csv(&read(&plan.out.join("aggregate.csv"))).unwrap();
    assert_eq!(rows.len(), 5);
    for row in &rows {
        let mut energy = Vec::new();
        let mut error = Vec::new();
        for r in out
            .runs
            .iter()
            .filter(|r| r.cell.kind == row.scheme && r.cell.sweep_value() == row.sweep_value)
        {
            let text = read(&plan.out.join("runs").join(format!("{}.csv", run_stem(&r.cell, r.seed))));
            let mut lines = text.lines();
            assert_eq!(lines.next(), Some(PER_RUN_HEADER));
            let nodes: Vec<Vec<f64>> = lines
                .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
                .collect();
            assert_eq!(nodes.len(), 6);
            let n = nodes.len() as f64;
            energy.push(nodes.iter().map(|c| c[2..7].iter().sum::<f64>()).sum::<f64>() / n);
            // Every node is scored over the same seconds, so node means average to the run mean.
            error.push(nodes.iter().map(|c| c[1]).sum::<f64>() / n);
        }
        assert_eq!(energy.len(), 3);
        let (me, se) = mean_sample_std(&energy);
        let (mr, sr) = mean_sample_std(&error);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-4 * b.abs().max(1e-3);
        assert!(
            close(me, row.mean_energy_j),
            "{} {me} {}",
            row.scheme,
            row.mean_energy_j
        );
        assert!(close(mr, row.mean_error_m), "{} {mr} {}", row.scheme, row.mean_error_m);
        assert!((se - row.std_energy_j).abs() <= 1e-3 * row.std_energy_j.max(1e-3));
        assert!((sr - row.std_error_m).abs() <= 1e-3 * row.std_error_m.max(1e-3));
    }
    let gps: f64 = out.runs[0]
        .result
        .nodes
        .iter()
        .map(|n| n.energy(EnergyCategory::Gps))
        .sum();
    assert!(gps > 0.0);
    let _ = std::fs::remove_dir_all(&plan.out);
}

#[test]
fn periodic_only_plans_write_periodic_figures() {
    let plan = ExperimentPlan {
        category: Category::Periodic,
        intervals: vec![20.0, 40.0],
        reps: 1,
        per_run: false,
        ..small("periodic-figs")
    };
    let out = run_plan(&plan).unwrap();
    assert_eq!(out.files.len(), 4);
    assert!(!plan.out.join("figures/error_vs_energy_dynamic.csv").exists());
    assert!(!plan.out.join("runs").exists());
    assert_eq!(
        read(&plan.out.join("figures/error_vs_interval.csv")).lines().count(),
        1 + 8
    );
    let _ = std::fs::remove_dir_all(&plan.out);
}

#[test]
fn traces_and_events_are_written_on_request() {
    let plan = ExperimentPlan {
        category: Category::Periodic,
        schemes: vec!["cluster_standard".into()],
        intervals: vec![60.0],
        reps: 1,
        emit_trace: true,
        emit_events: true,
        ..small("emit")
    };
    let out = run_plan(&plan).unwrap();
    let trace = read(&plan.out.join("traces/trace_seed7.csv"));
    assert!(trace.lines().any(|l| l == "t,node_id,px,py,pz,vx,vy,vz"));
    let events = read(&plan.out.join(format!("events/{}.csv", run_stem(&out.runs[0].cell, 7))));
    assert!(events.starts_with("t,event_kind,node,cluster_head,detail\n"));
    assert!(events.lines().count() > 1);
    let _ = std::fs::remove_dir_all(&plan.out);
}

#[test]
fn unwritable_output_names_the_path() {
    let blocker = scratch("blocker");
    std::fs::write(&blocker, "not a directory").unwrap();
    let plan = ExperimentPlan {
        out: blocker.join("out"),
        reps: 1,
        ..small("unused")
    };
    let err = run_plan(&plan).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("blocker"), "{err}");
    let _ = std::fs::remove_file(&blocker);
}

#[test]
fn invalid_plans_fail_before_running() {
    let plan = ExperimentPlan {
        limits: vec![],
        ..small("invalid")
    };
    let err = run_plan(&plan).unwrap_err().to_string();
    assert!(err.contains("limits"), "{err}");
    assert!(!plan.out.exists());
}
