//! Tracking strategies run over a ground-truth trace.
//!
//! Every scheme starts with one GPS lock per node at `t = 0`. Periodic
//! schemes then sample every `interval_s`; dynamic schemes sample when the
//! linear uncertainty model reaches `limit_m`. Cluster schemes share one
//! fix per cluster per sampling event through the [`crate::protocol`] layer.

mod engine;
mod score;
mod uncertainty;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::{Category, EnergyParams};
use crate::movement::GroundTruthTrace;
use crate::protocol::{Event, ProtocolParams};
use crate::sensors::{GpsNoiseParams, ImuParams};
use crate::{Error, Result, Vec3};

pub use score::{score_run, ErrorStats, Scores};
pub use uncertainty::{cluster_uncertainty, step_uncertainty, UncertaintyTracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    IndividualPeriodic,
    ClusterStandard,
    ClusterCkf,
    ClusterCkfAccMag,
    DynamicIndividual,
    DynamicCluster,
    DynamicCkf,
    DynamicCkfAccMag,
    DynamicBaselineVm,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 9] = [
        SchemeKind::IndividualPeriodic,
        SchemeKind::ClusterStandard,
        SchemeKind::ClusterCkf,
        SchemeKind::ClusterCkfAccMag,
        SchemeKind::DynamicIndividual,
        SchemeKind::DynamicCluster,
        SchemeKind::DynamicCkf,
        SchemeKind::DynamicCkfAccMag,
        SchemeKind::DynamicBaselineVm,
    ];

    pub const PERIODIC: [SchemeKind; 4] = [
        SchemeKind::IndividualPeriodic,
        SchemeKind::ClusterStandard,
        SchemeKind::ClusterCkf,
        SchemeKind::ClusterCkfAccMag,
    ];

    pub const DYNAMIC: [SchemeKind; 5] = [
        SchemeKind::DynamicIndividual,
        SchemeKind::DynamicCluster,
        SchemeKind::DynamicCkf,
        SchemeKind::DynamicCkfAccMag,
        SchemeKind::DynamicBaselineVm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::IndividualPeriodic => "individual",
            SchemeKind::ClusterStandard => "cluster_standard",
            SchemeKind::ClusterCkf => "cluster_ckf",
            SchemeKind::ClusterCkfAccMag => "cluster_ckf_accmag",
            SchemeKind::DynamicIndividual => "dyn_individual",
            SchemeKind::DynamicCluster => "dyn_cluster",
            SchemeKind::DynamicCkf => "dyn_ckf",
            SchemeKind::DynamicCkfAccMag => "dyn_ckf_accmag",
            SchemeKind::DynamicBaselineVm => "dyn_baseline_vm",
        }
    }

    pub fn is_dynamic(self) -> bool {
        Self::DYNAMIC.contains(&self)
    }

    pub fn uses_clusters(self) -> bool {
        matches!(
            self,
            SchemeKind::ClusterStandard
                | SchemeKind::ClusterCkf
                | SchemeKind::ClusterCkfAccMag
                | SchemeKind::DynamicCluster
                | SchemeKind::DynamicCkf
                | SchemeKind::DynamicCkfAccMag
        )
    }

    pub fn uses_kf(self) -> bool {
        matches!(
            self,
            SchemeKind::ClusterCkf
                | SchemeKind::ClusterCkfAccMag
                | SchemeKind::DynamicCkf
                | SchemeKind::DynamicCkfAccMag
        )
    }

    pub fn uses_imu(self) -> bool {
        matches!(self, SchemeKind::ClusterCkfAccMag | SchemeKind::DynamicCkfAccMag)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("schemes", format!("unknown scheme `{s}`")))
    }
}

/// One scheme at one sweep value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Sampling interval for periodic kinds, s.
    pub interval_s: Option<f64>,
    /// Uncertainty limit for dynamic kinds, m.
    pub limit_m: Option<f64>,
}

impl SchemeConfig {
    pub fn periodic(kind: SchemeKind, interval_s: f64) -> Self {
        Self {
            kind,
            interval_s: Some(interval_s),
            limit_m: None,
        }
    }

    pub fn dynamic(kind: SchemeKind, limit_m: f64) -> Self {
        Self {
            kind,
            interval_s: None,
            limit_m: Some(limit_m),
        }
    }

    /// Builds the config for `kind`, reading `value` as an interval or a limit.
    pub fn at(kind: SchemeKind, value: f64) -> Self {
        if kind.is_dynamic() {
            Self::dynamic(kind, value)
        } else {
            Self::periodic(kind, value)
        }
    }

    pub fn sweep_value(&self) -> f64 {
        self.interval_s.or(self.limit_m).unwrap_or(f64::NAN)
    }

    pub fn validate(&self, track_s: f64) -> Result<()> {
        match (self.kind.is_dynamic(), self.interval_s, self.limit_m) {
            (false, Some(iv), None) => {
                if !(iv >= 1.0 && iv <= track_s) {
                    return Err(Error::config("interval_s", format!("{iv} is outside [1, {track_s}]")));
                }
            }
            (true, None, Some(lim)) => {
                if !(lim.is_finite() && lim > 0.0) {
                    return Err(Error::config("limit_m", format!("must be > 0, got {lim}")));
                }
            }
            (false, _, _) => {
                return Err(Error::config(
                    "interval_s",
                    format!("{} needs an interval and no limit", self.kind),
                ))
            }
            (true, _, _) => {
                return Err(Error::config(
                    "limit_m",
                    format!("{} needs a limit and no interval", self.kind),
                ))
            }
        }
        Ok(())
    }
}

/// What the Kalman variants are scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CkfScoring {
    /// The filter's per-second output.
    #[default]
    Filter,
    /// Linear interpolation between the filter's posteriors at update instants.
    Interpolated,
}

/// How process noise accumulates while a control input is held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProcessNoise {
    /// `Q = diag(std_v^2 dt^2)` every step, as if velocity errors were fresh each step.
    PerStep,
    /// The held velocity error persists, so after `k` steps the accumulated
    /// variance is `std_v^2 (k dt)^2`; step `k` adds `std_v^2 (2k - 1) dt^2`.
    #[default]
    Coherent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationParams {
    /// Scale on the cluster radius when inflating the noise of a borrowed fix.
    pub kappa: f64,
    /// Per-axis velocity std for the process noise; `None` uses the fix's sacc.
    pub std_v: Option<[f64; 3]>,
    pub process_noise: ProcessNoise,
    pub ckf_scoring: CkfScoring,
}

impl Default for EstimationParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            std_v: None,
            process_noise: ProcessNoise::Coherent,
            ckf_scoring: CkfScoring::Filter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VmParams {
    /// A node asks its neighbours once its uncertainty reaches this fraction of the limit.
    pub trigger_fraction: f64,
    /// Distance assumed between a node and any neighbour it can hear, m.
    pub distance_bound: f64,
}

impl Default for VmParams {
    fn default() -> Self {
        Self {
            trigger_fraction: 0.9,
            distance_bound: 50.0,
        }
    }
}

/// Everything a run needs besides the trace, the scheme and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SimParams {
    pub energy: EnergyParams,
    pub gps: GpsNoiseParams,
    pub imu: ImuParams,
    pub protocol: ProtocolParams,
    pub estimation: EstimationParams,
    pub vm: VmParams,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        self.energy.validate()?;
        self.gps.validate()?;
        self.imu.validate()?;
        self.protocol.validate()?;
        if !(self.estimation.kappa.is_finite() && self.estimation.kappa >= 0.0) {
            return Err(Error::config("estimation.kappa", "must be >= 0"));
        }
        if let Some(s) = self.estimation.std_v {
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::config("estimation.std_v", "must be > 0 per axis"));
            }
        }
        if !(self.vm.trigger_fraction > 0.0 && self.vm.trigger_fraction <= 1.0) {
            return Err(Error::config("vm.trigger_fraction", "must be in (0, 1]"));
        }
        if !(self.vm.distance_bound.is_finite() && self.vm.distance_bound >= 0.0) {
            return Err(Error::config("vm.distance_bound", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Keep every node's per-second estimate in the result.
    pub keep_tracks: bool,
    /// Record protocol events.
    pub record_events: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeResult {
    pub mean_error_m: f64,
    /// Consumed energy per category, J, in [`Category::ALL`] order.
    pub energy_j: [f64; 5],
    /// GPS fixes this node took itself.
    pub fixes: u64,
    /// Seconds of the track during which the node had energy.
    pub alive_s: f64,
    pub death_s: Option<f64>,
    pub conserved: bool,
}

impl NodeResult {
    pub fn energy(&self, category: Category) -> f64 {
        self.energy_j[category as usize]
    }

    pub fn total_energy(&self) -> f64 {
        self.energy_j.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub scheme: SchemeConfig,
    pub seed: u64,
    pub nodes: Vec<NodeResult>,
    pub mean_error_m: f64,
    pub std_error_m: f64,
    pub total_energy_j: f64,
    pub mean_energy_j: f64,
    pub mean_fixes: f64,
    /// Time-averaged cluster count; zero for schemes without clusters.
    pub mean_clusters: f64,
    pub messages_sent: u64,
    pub messages_received: u64,
    /// Per-node per-second estimates when requested.
    pub tracks: Option<Vec<Vec<Vec3>>>,
    pub events: Vec<Event>,
}

impl RunResult {
    /// Energy conservation held exactly for every node.
    pub fn conserved(&self) -> bool {
        self.nodes.iter().all(|n| n.conserved)
    }
}

/// Runs any scheme over `trace`.
pub fn run_scheme(trace: &GroundTruthTrace, scheme: &SchemeConfig, params: &SimParams, seed: u64) -> Result<RunResult> {
    run_scheme_with(trace, scheme, params, seed, RunOptions::default())
}

pub fn run_scheme_with(
    trace: &GroundTruthTrace,
    scheme: &SchemeConfig,
    params: &SimParams,
    seed: u64,
    opts: RunOptions,
) -> Result<RunResult> {
    params.validate()?;
    let track_s = trace.len() as f64 * trace.step_s();
    scheme.validate(track_s)?;
    engine::Engine::new(trace, *scheme, params, seed, opts).run()
}

pub fn run_individual_periodic(
    trace: &GroundTruthTrace,
    interval_s: f64,
    params: &SimParams,
    seed: u64,
) -> Result<RunResult> {
    run_scheme(
        trace,
        &SchemeConfig::periodic(SchemeKind::IndividualPeriodic, interval_s),
        params,
        seed,
    )
}

pub fn run_cluster_standard(
    trace: &GroundTruthTrace,
    interval_s: f64,
    params: &SimParams,
    seed: u64,
) -> Result<RunResult> {
    run_scheme(
        trace,
        &SchemeConfig::periodic(SchemeKind::ClusterStandard, interval_s),
        params,
        seed,
    )
}

pub fn run_cluster_ckf(
    trace: &GroundTruthTrace,
    interval_s: f64,
    params: &SimParams,
    seed: u64,
    with_imu: bool,
) -> Result<RunResult> {
    let kind = if with_imu {
        SchemeKind::ClusterCkfAccMag
    } else {
        SchemeKind::ClusterCkf
    };
    run_scheme(trace, &SchemeConfig::periodic(kind, interval_s), params, seed)
}

/// Estimator used by a dynamic cluster run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicVariant {
    Standard,
    Ckf,
    CkfImu,
}

pub fn run_dynamic_cluster(
    trace: &GroundTruthTrace,
    limit_m: f64,
    params: &SimParams,
    seed: u64,
    variant: DynamicVariant,
) -> Result<RunResult> {
    let kind = match variant {
        DynamicVariant::Standard => SchemeKind::DynamicCluster,
        DynamicVariant::Ckf => SchemeKind::DynamicCkf,
        DynamicVariant::CkfImu => SchemeKind::DynamicCkfAccMag,
    };
    run_scheme(trace, &SchemeConfig::dynamic(kind, limit_m), params, seed)
}

pub fn run_dynamic_individual(
    trace: &GroundTruthTrace,
    limit_m: f64,
    params: &SimParams,
    seed: u64,
) -> Result<RunResult> {
    run_scheme(
        trace,
        &SchemeConfig::dynamic(SchemeKind::DynamicIndividual, limit_m),
        params,
        seed,
    )
}

pub fn run_baseline_vm(trace: &GroundTruthTrace, limit_m: f64, params: &SimParams, seed: u64) -> Result<RunResult> {
    run_scheme(
        trace,
        &SchemeConfig::dynamic(SchemeKind::DynamicBaselineVm, limit_m),
        params,
        seed,
    )
}
