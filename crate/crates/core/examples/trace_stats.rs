//! Prints movement statistics for a few seeded traces.
//!
//! cargo run --release -p cotrack-core --example trace_stats -- [seeds] [duration_s]

use std::time::Instant;

use cotrack::movement::{generate_trace, trace_statistics, Activity, FlockConfig, StatsOptions};

fn main() {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let duration: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(43_200);
    let mut cfg = FlockConfig {
        duration_s: duration,
        ..FlockConfig::default()
    };
    if let Ok(p) = std::env::var("PERCEPTION") {
        cfg.perception_radius = p.parse().unwrap();
    }
    if let Ok(p) = std::env::var("PURSUIT") {
        cfg.pursuit_tau = p.parse().unwrap();
    }
    if let Ok(c) = std::env::var("COHESION") {
        cfg.weights.cohesion = c.parse().unwrap();
    }
    if let Ok(p) = std::env::var("SPREAD") {
        cfg.forage_spread = p.parse().unwrap();
    }
    if let Ok(s) = std::env::var("SPACING") {
        cfg.target_spacing = s.parse().unwrap();
    }
    if let Ok(j) = std::env::var("JITTER") {
        cfg.jitter_sigma[0] = j.parse().unwrap();
    }
    for seed in 0..seeds {
        let start = Instant::now();
        let trace = generate_trace(&cfg, seed).expect("valid config");
        let elapsed = start.elapsed();
        let all = trace_statistics(&trace, StatsOptions::default());
        let transit = trace_statistics(
            &trace,
            StatsOptions {
                activity: Some(Activity::Transit),
                ..Default::default()
            },
        );
        let forage = trace_statistics(
            &trace,
            StatsOptions {
                activity: Some(Activity::Forage),
                ..Default::default()
            },
        );
        let counts = &all.cluster_counts;
        let mean_groups = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        let max_groups = counts.iter().max().copied().unwrap_or(0);
        let min_groups = counts.iter().min().copied().unwrap_or(0);
        let hist: Vec<usize> = (1..=5).map(|g| counts.iter().filter(|&&c| c == g).count()).collect();
        println!(
            "  pairwise mean {:.1} max {:.1}; group histogram 1..5 {:?}",
            forage.pairwise.mean, forage.pairwise.max, hist
        );
        println!(
            "seed {seed}: gen {:.2?} | speed all {:.2} transit {:.2} forage {:.2} | nn median all {:.1} transit {:.1} forage {:.1} | groups mean {:.2} range {}..{} | transit share {:.2}",
            elapsed,
            all.speed.mean,
            transit.speed.mean,
            forage.speed.mean,
            all.nearest_neighbor.median,
            transit.nearest_neighbor.median,
            forage.nearest_neighbor.median,
            mean_groups,
            min_groups,
            max_groups,
            transit.speed.count as f64 / all.speed.count as f64,
        );
    }
}
