//! Runs schemes on a few seeds and prints energy, error and fix counts.
//!
//! Usage: scheme_probe [seeds] [scheme=value ...]

use std::time::Instant;

use cotrack::movement::{generate_trace, FlockConfig};
use cotrack::schemes::{run_scheme, SchemeConfig, SchemeKind, SimParams};

fn main() {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let mut cells: Vec<(SchemeKind, f64)> = args
        .map(|a| {
            let (k, v) = a.split_once('=').expect("scheme=value");
            (k.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    if cells.is_empty() {
        for iv in [10.0, 100.0] {
            for k in SchemeKind::PERIODIC {
                cells.push((k, iv));
            }
        }
        for lim in [50.0, 450.0] {
            cells.push((SchemeKind::DynamicCluster, lim));
            cells.push((SchemeKind::DynamicBaselineVm, lim));
        }
    }
    let mut params = SimParams::default();
    if let Ok(q) = std::env::var("QMODEL") {
        params.estimation.process_noise = if q == "per_step" {
            cotrack::schemes::ProcessNoise::PerStep
        } else {
            cotrack::schemes::ProcessNoise::Coherent
        };
    }
    if let Ok(v) = std::env::var("STDV") {
        let v: f64 = v.parse().unwrap();
        params.estimation.std_v = Some([v, v, v]);
    }
    let mut flock = FlockConfig::default();
    if let Ok(c) = std::env::var("COHESION") {
        flock.weights.cohesion = c.parse().unwrap();
    }
    if let Ok(s) = std::env::var("SPREAD") {
        flock.forage_spread = s.parse().unwrap();
    }
    if let Ok(s) = std::env::var("SPACING") {
        flock.target_spacing = s.parse().unwrap();
    }
    let traces: Vec<_> = (0..seeds).map(|s| generate_trace(&flock, s).unwrap()).collect();
    for (kind, value) in cells {
        let cfg = SchemeConfig::at(kind, value);
        let started = Instant::now();
        let runs: Vec<_> = traces
            .iter()
            .enumerate()
            .map(|(s, tr)| run_scheme(tr, &cfg, &params, s as u64).unwrap())
            .collect();
        let n = runs.len() as f64;
        let e = runs.iter().map(|r| r.mean_energy_j).sum::<f64>() / n;
        let err = runs.iter().map(|r| r.mean_error_m).sum::<f64>() / n;
        let fixes = runs.iter().map(|r| r.mean_fixes).sum::<f64>() / n;
        let cl = runs.iter().map(|r| r.mean_clusters).sum::<f64>() / n;
        let dead = runs
            .iter()
            .map(|r| r.nodes.iter().filter(|x| x.death_s.is_some()).count())
            .sum::<usize>();
        println!(
            "{:<20} {:>6} | energy {:>8.1} J | error {:>7.2} m | fixes {:>8.1} | clusters {:>5.2} | dead {:>3} | {:.2} s/run",
            kind.name(),
            value,
            e,
            err,
            fixes,
            cl,
            dead,
            started.elapsed().as_secs_f64() / n
        );
    }
}
