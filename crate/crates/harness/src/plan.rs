use std::path::{Path, PathBuf};

use cotrack::energy::EnergyParams;
use cotrack::movement::FlockConfig;
use cotrack::protocol::ProtocolParams;
use cotrack::schemes::{EstimationParams, SchemeConfig, SchemeKind, SimParams, VmParams};
use cotrack::sensors::{GpsNoiseParams, ImuParams};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Periodic,
    Dynamic,
    Both,
}

impl Category {
    pub fn includes(self, kind: SchemeKind) -> bool {
        match self {
            Category::Periodic => !kind.is_dynamic(),
            Category::Dynamic => kind.is_dynamic(),
            Category::Both => true,
        }
    }
}

/// A full sweep: which schemes at which sweep values, how many repetitions,
/// and every simulation constant. Mirrors the TOML config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub category: Category,
    /// Scheme names; empty selects every scheme of `category`.
    pub schemes: Vec<String>,
    pub intervals: Vec<f64>,
    pub limits: Vec<f64>,
    pub reps: usize,
    pub base_seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    /// Write one per-node CSV per run.
    pub per_run: bool,
    pub emit_trace: bool,
    pub emit_events: bool,
    pub movement: FlockConfig,
    pub energy: EnergyParams,
    pub gps: GpsNoiseParams,
    pub imu: ImuParams,
    pub protocol: ProtocolParams,
    pub estimation: EstimationParams,
    pub vm: VmParams,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        let sim = SimParams::default();
        Self {
            category: Category::Both,
            schemes: Vec::new(),
            intervals: (1..=10).map(|i| 10.0 * i as f64).collect(),
            limits: (1..=9).map(|i| 50.0 * i as f64).collect(),
            reps: 20,
            base_seed: 0,
            jobs: 1,
            out: PathBuf::from("results"),
            per_run: true,
            emit_trace: false,
            emit_events: false,
            movement: FlockConfig::default(),
            energy: sim.energy,
            gps: sim.gps,
            imu: sim.imu,
            protocol: sim.protocol,
            estimation: sim.estimation,
            vm: sim.vm,
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            energy: self.energy,
            gps: self.gps,
            imu: self.imu,
            protocol: self.protocol.clone(),
            estimation: self.estimation.clone(),
            vm: self.vm.clone(),
        }
    }

    /// Selected schemes in canonical order.
    pub fn scheme_kinds(&self) -> Result<Vec<SchemeKind>> {
        if self.schemes.is_empty() {
            return Ok(SchemeKind::ALL
                .into_iter()
                .filter(|k| self.category.includes(*k))
                .collect());
        }
        let mut kinds = Vec::new();
        for name in &self.schemes {
            let kind: SchemeKind = name.parse()?;
            if !self.category.includes(kind) {
                return Err(Error::plan(
                    "schemes",
                    format!("`{name}` is not in the {:?} category", self.category).to_lowercase(),
                ));
            }
            if !kinds.contains(&kind) {
                kinds.push(kind);
            }
        }
        kinds.sort();
        Ok(kinds)
    }

    /// Every (scheme, sweep value) cell of the plan, validated.
    pub fn cells(&self) -> Result<Vec<SchemeConfig>> {
        if self.reps == 0 {
            return Err(Error::plan("reps", "must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(Error::plan("jobs", "must be at least 1"));
        }
        self.movement.validate()?;
        self.sim_params().validate()?;
        let kinds = self.scheme_kinds()?;
        if kinds.is_empty() {
            return Err(Error::plan("schemes", "selects nothing"));
        }
        let track_s = self.movement.duration_s as f64;
        let mut cells = Vec::new();
        for kind in kinds {
            let (field, values) = if kind.is_dynamic() {
                ("limits", &self.limits)
            } else {
                ("intervals", &self.intervals)
            };
            if values.is_empty() {
                return Err(Error::plan(field, format!("is empty but {kind} needs it")));
            }
            for &v in values {
                let cell = SchemeConfig::at(kind, v);
                cell.validate(track_s).map_err(|e| Error::plan(field, e.to_string()))?;
                cells.push(cell);
            }
        }
        Ok(cells)
    }

    /// Seed of repetition `rep`; every cell of that repetition shares it.
    pub fn seed(&self, rep: usize) -> u64 {
        self.base_seed + rep as u64
    }
}
