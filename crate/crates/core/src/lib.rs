//! Simulation core for cluster-based cooperative GPS tracking of mobile nodes.
//!
//! A seeded flocking model produces 3D ground truth for a group of nodes.
//! Tracking schemes then decide when each node samples GPS, how fixes are
//! shared inside one-hop clusters, and how positions are estimated between
//! fixes, while every GPS lock, radio packet and sensor second is charged
//! against a per-node battery.
//!
//! Module map:
//!
//! * [`movement`] - Reynolds flocking traces with camp/forage/return phases
//! * [`sensors`] - noisy GPS fixes and world-frame accelerometer samples
//! * [`energy`] - activity costs and exact per-node energy ledgers
//! * [`protocol`] - head election, membership, scheduling and fix distribution
//! * [`estimation`] - last-fix hold, interpolation and the cooperative Kalman filter
//! * [`schemes`] - the periodic and dynamic tracking strategies and run scoring

pub mod energy;
mod error;
pub mod estimation;
pub mod movement;
pub mod protocol;
pub mod rng;
pub mod schemes;
pub mod sensors;

pub use error::{Error, Result};

/// 3-vector in metres (positions) or m/s (velocities), world frame.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix used for filter covariances.
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Index of a node in a trace. Lower ids win election ties.
pub type NodeId = usize;
