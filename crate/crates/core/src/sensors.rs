//! Noisy GPS fixes and accelerometer samples derived from ground truth.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::movement::NodeKinematics;
use crate::rng::SimRng;
use crate::{Error, NodeId, Result, Vec3};

/// Standard gravity used to convert g-denominated datasheet figures.
pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub timestamp: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Reported position accuracy, m.
    pub pacc: f64,
    /// Reported speed accuracy, m/s.
    pub sacc: f64,
    pub sampler_id: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpsNoiseParams {
    pub sigma_pos: f64,
    pub sigma_vel: f64,
}

impl Default for GpsNoiseParams {
    fn default() -> Self {
        Self {
            sigma_pos: 10.0,
            sigma_vel: 0.5,
        }
    }
}

impl GpsNoiseParams {
    /// Zero sigmas are accepted (noiseless test runs); negative or non-finite are not.
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("gps.sigma_pos", self.sigma_pos), ("gps.sigma_vel", self.sigma_vel)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(field, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Accuracy indicators never report zero; a noiseless receiver still claims a tiny sigma.
    fn reported(sigma: f64) -> f64 {
        sigma.max(1e-6)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuParams {
    /// Accelerometer noise density, g per sqrt(Hz).
    pub noise_density: f64,
    pub bandwidth_hz: f64,
    pub sample_rate_hz: f64,
    pub duty_cycle: f64,
}

impl Default for ImuParams {
    fn default() -> Self {
        Self {
            noise_density: 200e-6,
            bandwidth_hz: 50.0,
            sample_rate_hz: 50.0,
            duty_cycle: 0.25,
        }
    }
}

impl ImuParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_density.is_finite() && self.noise_density >= 0.0) {
            return Err(Error::config("imu.noise_density", "must be >= 0"));
        }
        for (field, v) in [
            ("imu.bandwidth_hz", self.bandwidth_hz),
            ("imu.sample_rate_hz", self.sample_rate_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be > 0, got {v}")));
            }
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(Error::config("imu.duty_cycle", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn gaussian3(rng: &mut SimRng, sigma: f64) -> Vec3 {
    Vec3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * sigma
}

pub fn sample_gps(
    truth: &NodeKinematics,
    t: f64,
    sampler_id: NodeId,
    params: &GpsNoiseParams,
    rng: &mut SimRng,
) -> GpsFix {
    GpsFix {
        timestamp: t,
        position: truth.position + gaussian3(rng, params.sigma_pos),
        velocity: truth.velocity + gaussian3(rng, params.sigma_vel),
        pacc: GpsNoiseParams::reported(params.sigma_pos),
        sacc: GpsNoiseParams::reported(params.sigma_vel),
        sampler_id,
    }
}

/// Per-axis accelerometer noise in m/s^2: density * sqrt(1.6 * bandwidth), in g, times g.
pub fn accel_noise_sigma(params: &ImuParams) -> f64 {
    params.noise_density * (params.bandwidth_hz * 1.6).sqrt() * STANDARD_GRAVITY
}

/// World-frame acceleration as seen after attitude correction, with additive noise.
pub fn sample_world_accel(truth_accel: Vec3, params: &ImuParams, rng: &mut SimRng) -> Vec3 {
    truth_accel + gaussian3(rng, accel_noise_sigma(params))
}
