//! Three operations for the static demo page, each returning JSON text.
//!
//! The plain functions are what the tests call; the `#[wasm_bindgen]`
//! wrappers only turn errors into JS exceptions.

use cotrack::energy::{accmag_cost_per_second, gps_fix_cost, misc_cost, radio_msg_cost, Category, EnergyParams};
use cotrack::movement::{generate_trace, trace_statistics, Activity, FlockConfig, GroundTruthTrace, StatsOptions};
use cotrack::schemes::{run_scheme, SchemeConfig, SchemeKind, SimParams};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Longest track the page may request, s. Keeps a run well under a second in the browser.
pub const MAX_DURATION_S: u32 = 43_200;
pub const MAX_NODES: usize = 40;
/// Frames sent to the canvas for a preview.
const PREVIEW_FRAMES: usize = 400;

fn flock(n_nodes: usize, duration_s: u32) -> Result<FlockConfig, String> {
    if n_nodes == 0 || n_nodes > MAX_NODES {
        return Err(format!("nodes must be between 1 and {MAX_NODES}"));
    }
    if !(10..=MAX_DURATION_S).contains(&duration_s) {
        return Err(format!("duration must be between 10 and {MAX_DURATION_S} s"));
    }
    Ok(FlockConfig {
        n_nodes,
        duration_s,
        ..FlockConfig::default()
    })
}

#[derive(Debug, Serialize)]
pub struct TracePreview {
    pub nodes: usize,
    pub duration_s: u32,
    /// Seconds between consecutive frames.
    pub frame_step_s: usize,
    /// `frames[f][i] = [x, y, z]` of node `i` in frame `f`.
    pub frames: Vec<Vec<[f64; 3]>>,
    pub mean_speed: f64,
    pub forage_speed: f64,
    pub nn_median_m: f64,
}

fn preview(trace: &GroundTruthTrace, duration_s: u32) -> TracePreview {
    let stride = trace.len().div_ceil(PREVIEW_FRAMES).max(1);
    let frames = (0..trace.len())
        .step_by(stride)
        .map(|t| {
            trace
                .snapshot(t)
                .iter()
                .map(|k| [k.position.x, k.position.y, k.position.z])
                .collect()
        })
        .collect();
    let all = trace_statistics(trace, StatsOptions::default());
    let forage = trace_statistics(
        trace,
        StatsOptions {
            activity: Some(Activity::Forage),
            linkage_m: None,
        },
    );
    TracePreview {
        nodes: trace.n_nodes(),
        duration_s,
        frame_step_s: stride,
        frames,
        mean_speed: all.speed.mean,
        forage_speed: forage.speed.mean,
        nn_median_m: all.nearest_neighbor.median,
    }
}

pub fn preview_trace_json(n_nodes: usize, duration_s: u32, seed: u64) -> Result<String, String> {
    let trace = generate_trace(&flock(n_nodes, duration_s)?, seed).map_err(|e| e.to_string())?;
    serde_json::to_string(&preview(&trace, duration_s)).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct SchemeSummary {
    pub scheme: String,
    pub sweep_value: f64,
    pub mean_error_m: f64,
    pub std_error_m: f64,
    pub mean_energy_j: f64,
    /// Fleet totals per category, J.
    pub energy_by_category: Vec<(String, f64)>,
    pub mean_fixes: f64,
    pub mean_clusters: f64,
    pub messages_sent: u64,
    pub dead_nodes: usize,
}

pub fn simulate_json(scheme: &str, value: f64, n_nodes: usize, duration_s: u32, seed: u64) -> Result<String, String> {
    let kind: SchemeKind = scheme.parse().map_err(|e: cotrack::Error| e.to_string())?;
    let trace = generate_trace(&flock(n_nodes, duration_s)?, seed).map_err(|e| e.to_string())?;
    let cfg = SchemeConfig::at(kind, value);
    let r = run_scheme(&trace, &cfg, &SimParams::default(), seed).map_err(|e| e.to_string())?;
    let energy_by_category = Category::ALL
        .into_iter()
        .map(|c| (c.name().to_string(), r.nodes.iter().map(|n| n.energy(c)).sum()))
        .collect();
    let summary = SchemeSummary {
        scheme: kind.name().to_string(),
        sweep_value: value,
        mean_error_m: r.mean_error_m,
        std_error_m: r.std_error_m,
        mean_energy_j: r.mean_energy_j,
        energy_by_category,
        mean_fixes: r.mean_fixes,
        mean_clusters: r.mean_clusters,
        messages_sent: r.messages_sent,
        dead_nodes: r.nodes.iter().filter(|n| n.death_s.is_some()).count(),
    };
    serde_json::to_string(&summary).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct EnergyEstimate {
    pub gps_fix_j: f64,
    pub radio_msg_j: f64,
    pub accmag_per_s_j: f64,
    /// One node sampling its own GPS every `interval_s` over `duration_s`.
    pub individual_j: f64,
    /// Same node sharing each fix with `cluster_size - 1` others (GPS split, one broadcast received per fix).
    pub clustered_j: f64,
    pub battery_j: f64,
    pub individual_lifetime_h: f64,
}

/// Back-of-envelope node energy for a sampling interval and cluster size.
pub fn energy_estimate(
    p_gps: f64,
    t_gps_lock: f64,
    interval_s: f64,
    duration_s: f64,
    cluster_size: usize,
) -> Result<EnergyEstimate, String> {
    let params = EnergyParams {
        p_gps,
        t_gps_lock,
        ..EnergyParams::default()
    };
    params.validate().map_err(|e| e.to_string())?;
    if !(interval_s >= 1.0 && duration_s >= interval_s) {
        return Err("interval must be at least 1 s and no longer than the duration".into());
    }
    if cluster_size == 0 {
        return Err("cluster size must be at least 1".into());
    }
    let gps = gps_fix_cost(&params);
    let msg = radio_msg_cost(&params);
    let fixes = (duration_s / interval_s).floor() + 1.0;
    let misc = misc_cost(&params, duration_s);
    let individual_j = fixes * gps + misc;
    let k = cluster_size as f64;
    let clustered_j = fixes * (gps / k + msg) + misc;
    let per_s = individual_j / duration_s;
    Ok(EnergyEstimate {
        gps_fix_j: gps,
        radio_msg_j: msg,
        accmag_per_s_j: accmag_cost_per_second(&params),
        individual_j,
        clustered_j,
        battery_j: params.battery_j,
        individual_lifetime_h: params.battery_j / per_s / 3600.0,
    })
}

pub fn energy_json(
    p_gps: f64,
    t_gps_lock: f64,
    interval_s: f64,
    duration_s: f64,
    cluster_size: usize,
) -> Result<String, String> {
    let e = energy_estimate(p_gps, t_gps_lock, interval_s, duration_s, cluster_size)?;
    serde_json::to_string(&e).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = previewTrace)]
pub fn preview_trace(n_nodes: usize, duration_s: u32, seed: u32) -> Result<String, JsError> {
    preview_trace_json(n_nodes, duration_s, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulateScheme)]
pub fn simulate_scheme(
    scheme: &str,
    value: f64,
    n_nodes: usize,
    duration_s: u32,
    seed: u32,
) -> Result<String, JsError> {
    simulate_json(scheme, value, n_nodes, duration_s, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = energyCalculator)]
pub fn energy_calculator(
    p_gps: f64,
    t_gps_lock: f64,
    interval_s: f64,
    duration_s: f64,
    cluster_size: usize,
) -> Result<String, JsError> {
    energy_json(p_gps, t_gps_lock, interval_s, duration_s, cluster_size).map_err(|e| JsError::new(&e))
}

/// Scheme names the page offers, with whether each takes a limit (m) rather than an interval (s).
#[wasm_bindgen(js_name = schemeNames)]
pub fn scheme_names() -> String {
    let list: Vec<(&str, bool)> = SchemeKind::ALL.iter().map(|k| (k.name(), k.is_dynamic())).collect();
    serde_json::to_string(&list).expect("plain data")
}
