//! Group movement ground truth.
//!
//! Nodes start at two base camps, fly as a Reynolds flock (separation,
//! alignment, cohesion plus attraction to a goal) to a shared foraging area,
//! wander there, and head home for the last part of the active window.
//!
//! Foraging motion is random but bounded: every site has a wander point that
//! travels at the target speed while its heading diffuses, and the flock
//! chases it. Each node adds its own Ornstein-Uhlenbeck velocity jitter.
//!
//! Integration is explicit Euler at `step_s`: the recorded velocity at `t` is
//! exactly the one that carries the node from `p(t)` to `p(t + 1)`.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{self, SimRng, Stream};
use crate::{Error, NodeId, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeKinematics {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl NodeKinematics {
    pub fn new(position: Vec3, velocity: Vec3) -> Self {
        Self { position, velocity }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoidWeights {
    pub separation: f64,
    pub alignment: f64,
    pub cohesion: f64,
    pub goal: f64,
}

impl Default for BoidWeights {
    fn default() -> Self {
        Self {
            separation: 1.2,
            alignment: 0.5,
            cohesion: 0.25,
            goal: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlockConfig {
    pub n_nodes: usize,
    pub duration_s: u32,
    pub step_s: f64,
    /// Extent of the simulation volume; positions live in `[0, volume]` per axis.
    pub volume: [f64; 3],
    pub target_speed: f64,
    pub target_spacing: f64,
    /// Two camp positions. Drawn from the seed when absent.
    pub base_camps: Option<Vec<[f64; 3]>>,
    /// Drawn from the seed when absent.
    pub forage_center: Option<[f64; 3]>,
    pub forage_radius: f64,
    /// Horizontal camp-to-forage distance range used when camps are drawn.
    pub camp_distance: [f64; 2],
    /// Fraction of nodes starting at the first camp.
    pub camp_split: f64,
    pub spawn_radius: f64,
    pub weights: BoidWeights,
    pub perception_radius: f64,
    /// Upper bound on the steering acceleration, m/s^2.
    pub max_accel: f64,
    /// Heading correlation time of the wander point, s.
    pub wander_tau: f64,
    /// Time constant with which foraging nodes close on the wander point, s.
    pub pursuit_tau: f64,
    /// Stationary per-axis std of each node's horizontal offset from the wander point, m.
    pub forage_spread: f64,
    /// Correlation time of the forage offset, s.
    pub forage_spread_tau: f64,
    /// Stationary per-axis std of each node's velocity jitter (horizontal, vertical), m/s.
    pub jitter_sigma: [f64; 2],
    /// Correlation time of the velocity jitter, s.
    pub jitter_tau: f64,
    /// Fraction of the track after which every node heads back to its camp.
    pub return_at: f64,
}

impl Default for FlockConfig {
    fn default() -> Self {
        Self {
            n_nodes: 20,
            duration_s: 43_200,
            step_s: 1.0,
            volume: [50_000.0, 50_000.0, 1_000.0],
            target_speed: 6.0,
            target_spacing: 30.0,
            base_camps: None,
            forage_center: None,
            forage_radius: 1_500.0,
            camp_distance: [4_000.0, 12_000.0],
            camp_split: 0.5,
            spawn_radius: 40.0,
            weights: BoidWeights::default(),
            perception_radius: 100.0,
            max_accel: 1.5,
            wander_tau: 60.0,
            pursuit_tau: 30.0,
            forage_spread: 0.0,
            forage_spread_tau: 300.0,
            jitter_sigma: [1.0, 0.3],
            jitter_tau: 20.0,
            return_at: 0.85,
        }
    }
}

impl FlockConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be > 0, got {v}")))
            }
        };
        if self.n_nodes < 2 {
            return Err(Error::config("n_nodes", "need at least 2 nodes"));
        }
        if self.duration_s == 0 {
            return Err(Error::config("duration_s", "must be > 0"));
        }
        positive("step_s", self.step_s)?;
        for v in self.volume {
            positive("volume", v)?;
        }
        positive("target_speed", self.target_speed)?;
        positive("target_spacing", self.target_spacing)?;
        positive("forage_radius", self.forage_radius)?;
        positive("perception_radius", self.perception_radius)?;
        positive("max_accel", self.max_accel)?;
        positive("wander_tau", self.wander_tau)?;
        positive("pursuit_tau", self.pursuit_tau)?;
        positive("forage_spread_tau", self.forage_spread_tau)?;
        if !(self.forage_spread.is_finite() && self.forage_spread >= 0.0) {
            return Err(Error::config("forage_spread", "must be >= 0"));
        }
        positive("jitter_tau", self.jitter_tau)?;
        let w = self.weights;
        for (field, v) in [
            ("weights.separation", w.separation),
            ("weights.alignment", w.alignment),
            ("weights.cohesion", w.cohesion),
            ("weights.goal", w.goal),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(field, format!("must be >= 0, got {v}")));
            }
        }
        if self.jitter_sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::config("jitter_sigma", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.camp_split) {
            return Err(Error::config("camp_split", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.return_at) {
            return Err(Error::config("return_at", "must lie in [0, 1]"));
        }
        if !(self.camp_distance[0] > 0.0 && self.camp_distance[0] <= self.camp_distance[1]) {
            return Err(Error::config("camp_distance", "need 0 < min <= max"));
        }
        if let Some(camps) = &self.base_camps {
            if camps.len() != 2 {
                return Err(Error::config("base_camps", "exactly two camps required"));
            }
            for c in camps {
                if !self.inside(&Vec3::from(*c)) {
                    return Err(Error::config("base_camps", "camp outside the volume"));
                }
            }
        }
        if let Some(c) = self.forage_center {
            let r = self.forage_radius;
            let fits =
                (0..2).all(|k| c[k] - r >= 0.0 && c[k] + r <= self.volume[k]) && (0.0..=self.volume[2]).contains(&c[2]);
            if !fits {
                return Err(Error::config(
                    "forage_center",
                    "forage region must lie inside the volume",
                ));
            }
        } else if (0..2).any(|k| 2.0 * (self.forage_radius + 1_000.0) >= self.volume[k]) {
            return Err(Error::config(
                "forage_radius",
                "forage region cannot fit inside the volume",
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration_s as f64 / self.step_s).round() as usize
    }

    fn inside(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= 0.0 && p[k] <= self.volume[k])
    }
}

/// What a node is doing at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Transit,
    Forage,
}

/// Per-node steering behaviour. Forage chases a wander point and carries the
/// node's jitter state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behaviour {
    Transit {
        goal: Vec3,
    },
    Forage {
        target: Vec3,
        target_velocity: Vec3,
        jitter: Vec3,
    },
}

impl Behaviour {
    pub fn activity(&self) -> Activity {
        match self {
            Behaviour::Transit { .. } => Activity::Transit,
            Behaviour::Forage { .. } => Activity::Forage,
        }
    }
}

/// Direction that separates two coincident nodes: lower id goes to -x.
fn tie_break(i: NodeId, j: NodeId) -> Vec3 {
    if i < j {
        -Vec3::x()
    } else {
        Vec3::x()
    }
}

fn unit_or(v: Vec3, fallback: Vec3) -> Vec3 {
    let n = v.norm();
    if n > 1e-12 {
        v / n
    } else {
        fallback
    }
}

/// Advances every node by one step.
///
/// `nodes` holds `p(t)` and the previous velocity; the result holds `p(t+1)`
/// and the velocity `v(t)` that moved the node there. Forage jitter state in
/// `behaviours` is advanced in place.
pub fn boid_step(
    nodes: &[NodeKinematics],
    behaviours: &mut [Behaviour],
    config: &FlockConfig,
    rng: &mut SimRng,
) -> Vec<NodeKinematics> {
    debug_assert_eq!(nodes.len(), behaviours.len());
    let dt = config.step_s;
    let w = config.weights;
    let speed = config.target_speed;
    let (min_speed, max_speed) = (0.5 * speed, 1.5 * speed);
    let r2 = config.perception_radius * config.perception_radius;

    // Jitter noise is drawn for every forage node in id order before any
    // kinematics so the stream layout does not depend on geometry.
    for b in behaviours.iter_mut() {
        if let Behaviour::Forage { jitter, .. } = b {
            let decay = dt / config.jitter_tau;
            let kick = (2.0 * decay).sqrt();
            let [sh, sv] = config.jitter_sigma;
            let noise = Vec3::new(
                sh * rng.sample::<f64, _>(StandardNormal),
                sh * rng.sample::<f64, _>(StandardNormal),
                sv * rng.sample::<f64, _>(StandardNormal),
            );
            *jitter = *jitter * (1.0 - decay) + noise * kick;
            let n = jitter.norm();
            if n > speed {
                *jitter *= speed / n;
            }
        }
    }

    let mut out = Vec::with_capacity(nodes.len());
    for (i, me) in nodes.iter().enumerate() {
        let mut separation = Vec3::zeros();
        let mut vel_sum = Vec3::zeros();
        let mut pos_sum = Vec3::zeros();
        let mut count = 0usize;
        for (j, other) in nodes.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = me.position - other.position;
            let dist2 = d.norm_squared();
            if dist2 > r2 {
                continue;
            }
            count += 1;
            vel_sum += other.velocity;
            pos_sum += other.position;
            let dist = dist2.sqrt();
            if dist < config.target_spacing {
                let dir = if dist > 1e-9 { d / dist } else { tie_break(i, j) };
                separation += dir * ((config.target_spacing - dist) / config.target_spacing);
            }
        }

        let mut accel = separation * (w.separation * speed);
        if count > 0 {
            let n = count as f64;
            accel += (vel_sum / n - me.velocity) * w.alignment;
            accel += (pos_sum / n - me.position) / config.perception_radius * (w.cohesion * speed);
        }
        accel += match behaviours[i] {
            Behaviour::Transit { goal } => {
                let to_goal = goal - me.position;
                if to_goal.norm() > 1e-9 {
                    (to_goal.normalize() * speed - me.velocity) * w.goal
                } else {
                    Vec3::zeros()
                }
            }
            Behaviour::Forage {
                target,
                target_velocity,
                jitter,
            } => {
                // Pursuit with feed-forward of the wander point's own velocity.
                let mut desired = target_velocity + (target - me.position) / config.pursuit_tau;
                let n = desired.norm();
                if n > max_speed {
                    desired *= max_speed / n;
                }
                (desired + jitter - me.velocity) * w.goal
            }
        };
        let a = accel.norm();
        if a > config.max_accel {
            accel *= config.max_accel / a;
        }

        let mut v = me.velocity + accel * dt;
        let s = v.norm();
        if s < 1e-12 {
            let fallback = match behaviours[i] {
                Behaviour::Transit { goal } => unit_or(goal - me.position, Vec3::x()),
                Behaviour::Forage { target, .. } => unit_or(target - me.position, Vec3::x()),
            };
            v = fallback * min_speed;
        } else if s > max_speed {
            v *= max_speed / s;
        } else if s < min_speed {
            v *= min_speed / s;
        }

        // Reflect before advancing so the recorded velocity is the one applied.
        let mut next = me.position + v * dt;
        for k in 0..3 {
            if next[k] < 0.0 || next[k] > config.volume[k] {
                v[k] = -v[k];
            }
        }
        next = me.position + v * dt;
        for k in 0..3 {
            if next[k] < 0.0 || next[k] > config.volume[k] {
                next[k] = next[k].clamp(0.0, config.volume[k]);
            }
        }
        out.push(NodeKinematics::new(next, v));
    }
    out
}

/// Seeded 3D ground truth for every node, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrace {
    n_nodes: usize,
    step_s: f64,
    seed: u64,
    config: Option<FlockConfig>,
    samples: Vec<NodeKinematics>,
    activities: Option<Vec<Activity>>,
}

impl GroundTruthTrace {
    /// Builds a trace from time-major samples (`samples[t * n_nodes + node]`).
    pub fn from_samples(n_nodes: usize, step_s: f64, seed: u64, samples: Vec<NodeKinematics>) -> Result<Self> {
        if n_nodes == 0 || samples.is_empty() || !samples.len().is_multiple_of(n_nodes) {
            return Err(Error::LengthMismatch {
                expected: n_nodes.max(1),
                got: samples.len(),
            });
        }
        if step_s.is_nan() || step_s <= 0.0 {
            return Err(Error::config("step_s", "must be > 0"));
        }
        Ok(Self {
            n_nodes,
            step_s,
            seed,
            config: None,
            samples,
            activities: None,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of time samples per node.
    pub fn len(&self) -> usize {
        self.samples.len() / self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn step_s(&self) -> f64 {
        self.step_s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> Option<&FlockConfig> {
        self.config.as_ref()
    }

    pub fn at(&self, t: usize, node: NodeId) -> &NodeKinematics {
        &self.samples[t * self.n_nodes + node]
    }

    /// All nodes at time index `t`.
    pub fn snapshot(&self, t: usize) -> &[NodeKinematics] {
        &self.samples[t * self.n_nodes..(t + 1) * self.n_nodes]
    }

    pub fn node_series(&self, node: NodeId) -> impl Iterator<Item = &NodeKinematics> + '_ {
        self.samples.iter().skip(node).step_by(self.n_nodes)
    }

    pub fn activity(&self, t: usize, node: NodeId) -> Option<Activity> {
        self.activities.as_ref().map(|a| a[t * self.n_nodes + node])
    }

    /// True acceleration over `[t, t + 1]` as the first difference of velocity.
    /// Zero at the final sample.
    pub fn accel(&self, t: usize, node: NodeId) -> Vec3 {
        if t + 1 >= self.len() {
            return Vec3::zeros();
        }
        (self.at(t + 1, node).velocity - self.at(t, node).velocity) / self.step_s
    }

    /// Writes the trace as comma-separated text: `#` header lines echoing the
    /// config and seed, a column header, then one row per node per step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        if let Some(cfg) = &self.config {
            let json = serde_json::to_string(cfg).map_err(|e| Error::config("config", e.to_string()))?;
            writeln!(out, "# config {json}")?;
        }
        writeln!(out, "# seed {}", self.seed)?;
        writeln!(out, "# step_s {}", self.step_s)?;
        writeln!(out, "t,node_id,px,py,pz,vx,vy,vz")?;
        for t in 0..self.len() {
            let time = t as f64 * self.step_s;
            for (i, k) in self.snapshot(t).iter().enumerate() {
                let (p, v) = (k.position, k.velocity);
                writeln!(out, "{time},{i},{},{},{},{},{},{}", p.x, p.y, p.z, v.x, v.y, v.z)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut seed = 0;
        let mut step_s = 1.0;
        let mut config = None;
        let mut rows: Vec<(usize, NodeKinematics)> = Vec::new();
        let mut n_nodes = 0;
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let parse_err = |reason: String| Error::Parse { line: lineno, reason };
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some(v) = rest.strip_prefix("seed ") {
                    seed = v.trim().parse().map_err(|e| parse_err(format!("seed: {e}")))?;
                } else if let Some(v) = rest.strip_prefix("step_s ") {
                    step_s = v.trim().parse().map_err(|e| parse_err(format!("step_s: {e}")))?;
                } else if let Some(v) = rest.strip_prefix("config ") {
                    config = Some(serde_json::from_str(v).map_err(|e| parse_err(format!("config: {e}")))?);
                }
                continue;
            }
            if line.starts_with("t,") || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(parse_err(format!("expected 8 fields, got {}", fields.len())));
            }
            let num = |k: usize| -> Result<f64> {
                fields[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("field {k}: {e}")))
            };
            let node: usize = fields[1]
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("node_id: {e}")))?;
            n_nodes = n_nodes.max(node + 1);
            rows.push((
                node,
                NodeKinematics::new(
                    Vec3::new(num(2)?, num(3)?, num(4)?),
                    Vec3::new(num(5)?, num(6)?, num(7)?),
                ),
            ));
        }
        for (k, (node, _)) in rows.iter().enumerate() {
            if *node != k % n_nodes.max(1) {
                return Err(Error::Parse {
                    line: k + 1,
                    reason: "rows must be ordered by time, then node id".into(),
                });
            }
        }
        let samples = rows.into_iter().map(|(_, k)| k).collect();
        let mut trace = Self::from_samples(n_nodes, step_s, seed, samples)?;
        trace.config = config;
        Ok(trace)
    }
}

fn draw_layout(config: &FlockConfig, rng: &mut SimRng) -> (Vec3, [Vec3; 2]) {
    let vol = config.volume;
    let center = match config.forage_center {
        Some(c) => Vec3::from(c),
        None => {
            let margin = config.forage_radius + 1_000.0;
            Vec3::new(
                rng.random_range(margin..vol[0] - margin),
                rng.random_range(margin..vol[1] - margin),
                rng.random_range(0.3 * vol[2]..0.7 * vol[2]),
            )
        }
    };
    let camps = match &config.base_camps {
        Some(c) => [Vec3::from(c[0]), Vec3::from(c[1])],
        None => {
            let mut draw = || {
                let bearing = rng.random_range(0.0..std::f64::consts::TAU);
                let dist = rng.random_range(config.camp_distance[0]..=config.camp_distance[1]);
                let x = (center.x + dist * bearing.cos()).clamp(100.0, vol[0] - 100.0);
                let y = (center.y + dist * bearing.sin()).clamp(100.0, vol[1] - 100.0);
                let z = rng.random_range(0.02 * vol[2]..0.1 * vol[2]);
                Vec3::new(x, y, z)
            };
            [draw(), draw()]
        }
    };
    (center, camps)
}

/// Point a foraging flock chases. It moves at the target speed; its horizontal
/// heading diffuses with correlation time `wander_tau` and turns back toward
/// the site centre whenever it strays beyond the forage radius.
#[derive(Debug, Clone, Copy)]
struct Wander {
    center: Vec3,
    position: Vec3,
    heading: f64,
    climb: f64,
}

impl Wander {
    const MAX_RETURN_TURN: f64 = 0.05;
    const CLIMB_SIGMA: f64 = 0.5;
    const CLIMB_TAU: f64 = 30.0;

    fn new(center: Vec3, rng: &mut SimRng) -> Self {
        Self {
            center,
            position: center,
            heading: rng.random_range(0.0..std::f64::consts::TAU),
            climb: 0.0,
        }
    }

    fn velocity(&self, speed: f64) -> Vec3 {
        let horizontal = (speed * speed - self.climb * self.climb).max(0.0).sqrt();
        Vec3::new(
            horizontal * self.heading.cos(),
            horizontal * self.heading.sin(),
            self.climb,
        )
    }

    fn step(&mut self, config: &FlockConfig, rng: &mut SimRng) {
        let dt = config.step_s;
        let turn: f64 = rng.sample(StandardNormal);
        let climb_kick: f64 = rng.sample(StandardNormal);
        self.heading += (2.0 * dt / config.wander_tau).sqrt() * turn;

        let offset = self.center - self.position;
        let out_by = offset.xy().norm() - config.forage_radius;
        if out_by > 0.0 {
            let wanted = offset.y.atan2(offset.x);
            let diff =
                (wanted - self.heading + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
            self.heading += diff.clamp(-Self::MAX_RETURN_TURN * dt, Self::MAX_RETURN_TURN * dt);
        }
        let decay = dt / Self::CLIMB_TAU;
        self.climb =
            self.climb * (1.0 - decay) + Self::CLIMB_SIGMA * (2.0 * decay).sqrt() * climb_kick + offset.z / 600.0 * dt;
        self.climb = self.climb.clamp(-0.5 * config.target_speed, 0.5 * config.target_speed);

        self.position += self.velocity(config.target_speed) * dt;
        for k in 0..3 {
            self.position[k] = self.position[k].clamp(0.0, config.volume[k]);
        }
    }
}

/// Generates a deterministic trace for `(config, seed)`.
pub fn generate_trace(config: &FlockConfig, seed: u64) -> Result<GroundTruthTrace> {
    config.validate()?;
    let mut rng = rng::stream(seed, Stream::Movement);
    let n = config.n_nodes;
    let steps = config.steps();
    let (forage_center, camps) = draw_layout(config, &mut rng);

    let first_camp = (n as f64 * config.camp_split).round() as usize;
    let home_site: Vec<usize> = (0..n).map(|i| if i < first_camp { 1 } else { 2 }).collect();
    let mut nodes: Vec<NodeKinematics> = home_site
        .iter()
        .map(|&site| {
            let camp = camps[site - 1];
            let r = config.spawn_radius * rng.random::<f64>().sqrt();
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let dz: f64 = rng.random_range(-5.0..5.0);
            let mut p = camp + Vec3::new(r * a.cos(), r * a.sin(), dz);
            for k in 0..3 {
                p[k] = p[k].clamp(0.0, config.volume[k]);
            }
            let v = unit_or(forage_center - p, Vec3::x()) * config.target_speed;
            NodeKinematics::new(p, v)
        })
        .collect();
    // Site 0 is the shared forage area, sites 1 and 2 the camps.
    let mut sites = [
        Wander::new(forage_center, &mut rng),
        Wander::new(camps[0], &mut rng),
        Wander::new(camps[1], &mut rng),
    ];
    let mut goal_site = vec![0usize; n];
    let mut spread = vec![Vec3::zeros(); n];
    let spread_decay = config.step_s / config.forage_spread_tau;
    let spread_kick = config.forage_spread * (2.0 * spread_decay).sqrt();
    let mut behaviours = vec![Behaviour::Transit { goal: forage_center }; n];
    let mut heading_home = false;
    let return_step = (config.return_at * steps as f64).round() as usize;
    let arrive = 0.5 * config.forage_radius;

    let mut samples = Vec::with_capacity(steps * n);
    let mut activities = Vec::with_capacity(steps * n);
    for t in 0..steps {
        for site in sites.iter_mut() {
            site.step(config, &mut rng);
        }
        for off in spread.iter_mut() {
            let kick = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), 0.0);
            *off = *off * (1.0 - spread_decay) + kick * spread_kick;
        }
        if !heading_home && t >= return_step {
            heading_home = true;
            for i in 0..n {
                goal_site[i] = home_site[i];
                behaviours[i] = Behaviour::Transit {
                    goal: sites[home_site[i]].center,
                };
            }
        }
        for (i, b) in behaviours.iter_mut().enumerate() {
            let site = &sites[goal_site[i]];
            match *b {
                Behaviour::Transit { goal } if (nodes[i].position - goal).norm() < arrive => {
                    *b = Behaviour::Forage {
                        target: site.position + spread[i],
                        target_velocity: site.velocity(config.target_speed),
                        jitter: Vec3::zeros(),
                    };
                }
                Behaviour::Forage { jitter, .. } => {
                    *b = Behaviour::Forage {
                        target: site.position + spread[i],
                        target_velocity: site.velocity(config.target_speed),
                        jitter,
                    };
                }
                _ => {}
            }
        }
        let next = boid_step(&nodes, &mut behaviours, config, &mut rng);
        for i in 0..n {
            samples.push(NodeKinematics::new(nodes[i].position, next[i].velocity));
            activities.push(behaviours[i].activity());
        }
        nodes = next;
    }

    Ok(GroundTruthTrace {
        n_nodes: n,
        step_s: config.step_s,
        seed,
        config: Some(config.clone()),
        samples,
        activities: Some(activities),
    })
}

/// Moments and median of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(mut values: Vec<f64>) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                count,
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
                median: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mid = count / 2;
        let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
        let mut median = *m;
        if count.is_multiple_of(2) {
            let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            median = 0.5 * (median + lower);
        }
        Self {
            count,
            mean,
            std: var.sqrt(),
            min,
            max,
            median,
        }
    }
}

/// Fixed-width histogram with an overflow bin at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(bin_width: f64, max: f64) -> Self {
        Self {
            bin_width,
            counts: vec![0; (max / bin_width).ceil() as usize + 1],
        }
    }

    fn add(&mut self, v: f64) {
        let last = self.counts.len() - 1;
        let bin = ((v / self.bin_width).floor().max(0.0) as usize).min(last);
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StatsOptions {
    /// Restrict speed and spacing statistics to samples in this activity.
    pub activity: Option<Activity>,
    /// Linkage distance for the group-count series.
    pub linkage_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStatistics {
    pub speed: Summary,
    pub nearest_neighbor: Summary,
    pub pairwise: Summary,
    pub pairwise_hist: Histogram,
    /// Connected components of the linkage graph at every step.
    pub cluster_counts: Vec<usize>,
}

/// Number of connected components when nodes closer than `linkage` are joined.
pub fn count_groups(nodes: &[NodeKinematics], linkage: f64) -> usize {
    let n = nodes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let l2 = linkage * linkage;
    for i in 0..n {
        for j in i + 1..n {
            if (nodes[i].position - nodes[j].position).norm_squared() <= l2 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

pub fn trace_statistics(trace: &GroundTruthTrace, opts: StatsOptions) -> TraceStatistics {
    let n = trace.n_nodes();
    let linkage = opts.linkage_m.unwrap_or(50.0);
    let mut speeds = Vec::new();
    let mut nn = Vec::new();
    let mut pairwise = Vec::new();
    let mut hist = Histogram::new(1.0, 2_000.0);
    let mut cluster_counts = Vec::with_capacity(trace.len());
    for t in 0..trace.len() {
        let snap = trace.snapshot(t);
        cluster_counts.push(count_groups(snap, linkage));
        let keep = |i: usize| match opts.activity {
            None => true,
            Some(a) => trace.activity(t, i).is_none_or(|x| x == a),
        };
        for i in 0..n {
            if !keep(i) {
                continue;
            }
            speeds.push(snap[i].speed());
            let mut best = f64::INFINITY;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = (snap[i].position - snap[j].position).norm();
                best = best.min(d);
                if j > i && keep(j) {
                    pairwise.push(d);
                    hist.add(d);
                }
            }
            nn.push(best);
        }
    }
    TraceStatistics {
        speed: Summary::of(speeds),
        nearest_neighbor: Summary::of(nn),
        pairwise: Summary::of(pairwise),
        pairwise_hist: hist,
        cluster_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(duration_s: u32) -> FlockConfig {
        FlockConfig {
            duration_s,
            ..FlockConfig::default()
        }
    }

    #[test]
    fn lone_transit_node_flies_straight_at_target_speed() {
        let cfg = FlockConfig::default();
        let goal = Vec3::new(20_000.0, 20_000.0, 500.0);
        let p = Vec3::new(10_000.0, 10_000.0, 500.0);
        let v = (goal - p).normalize() * cfg.target_speed;
        let mut rng = rng::stream(1, Stream::Movement);
        let mut beh = vec![Behaviour::Transit { goal }];
        let next = boid_step(&[NodeKinematics::new(p, v)], &mut beh, &cfg, &mut rng);
        assert!((next[0].velocity - v).norm() < 1e-12);
        assert!((next[0].position - (p + v)).norm() < 1e-9);
        assert!((next[0].speed() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_nodes_split_along_tie_break_axis() {
        let cfg = FlockConfig::default();
        let p = Vec3::new(1_000.0, 1_000.0, 500.0);
        let v = Vec3::new(0.0, 6.0, 0.0);
        let goal = p + Vec3::new(0.0, 10_000.0, 0.0);
        let mut rng = rng::stream(1, Stream::Movement);
        let mut beh = vec![Behaviour::Transit { goal }; 2];
        let nodes = [NodeKinematics::new(p, v), NodeKinematics::new(p, v)];
        let next = boid_step(&nodes, &mut beh, &cfg, &mut rng);
        assert!(next[0].velocity.x < 0.0 && next[1].velocity.x > 0.0);
        assert!(next[1].position.x - next[0].position.x > 0.0);
        assert!(next.iter().all(|k| k.velocity.iter().all(|c| c.is_finite())));
    }

    #[test]
    fn reflection_keeps_nodes_inside() {
        let cfg = FlockConfig::default();
        let p = Vec3::new(2.0, 1_000.0, 500.0);
        let v = Vec3::new(-6.0, 0.0, 0.0);
        let mut rng = rng::stream(1, Stream::Movement);
        let mut beh = vec![Behaviour::Transit {
            goal: Vec3::new(-100.0, 1_000.0, 500.0),
        }];
        let next = boid_step(&[NodeKinematics::new(p, v)], &mut beh, &cfg, &mut rng);
        assert!(next[0].position.x >= 0.0);
        assert!((next[0].position - (p + next[0].velocity)).norm() < 1e-9);
    }

    #[test]
    fn trace_length_matches_duration() {
        let trace = generate_trace(&small_config(10), 3).unwrap();
        assert_eq!(trace.len(), 10);
        assert_eq!(trace.node_series(4).count(), 10);
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = small_config(300);
        assert_eq!(generate_trace(&cfg, 11).unwrap(), generate_trace(&cfg, 11).unwrap());
        assert_ne!(generate_trace(&cfg, 11).unwrap(), generate_trace(&cfg, 12).unwrap());
    }

    #[test]
    fn invalid_config_names_the_field() {
        let cfg = FlockConfig {
            n_nodes: 1,
            ..FlockConfig::default()
        };
        match generate_trace(&cfg, 0) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "n_nodes"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = FlockConfig {
            step_s: 0.0,
            ..FlockConfig::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidConfig { field: "step_s", .. })
        ));
    }

    #[test]
    fn stationary_trace_speed_is_point_mass_at_zero() {
        let samples = vec![NodeKinematics::new(Vec3::zeros(), Vec3::zeros()); 3 * 5];
        let trace = GroundTruthTrace::from_samples(3, 1.0, 0, samples).unwrap();
        let stats = trace_statistics(&trace, StatsOptions::default());
        assert_eq!(stats.speed.count, 15);
        assert_eq!((stats.speed.min, stats.speed.max, stats.speed.std), (0.0, 0.0, 0.0));
    }

    #[test]
    fn static_pair_distance_is_point_mass() {
        let a = NodeKinematics::new(Vec3::zeros(), Vec3::zeros());
        let b = NodeKinematics::new(Vec3::new(20.0, 0.0, 0.0), Vec3::zeros());
        let trace = GroundTruthTrace::from_samples(2, 1.0, 0, [a, b].repeat(4)).unwrap();
        let stats = trace_statistics(&trace, StatsOptions::default());
        assert_eq!(stats.pairwise.count, 4);
        assert_eq!((stats.pairwise.min, stats.pairwise.max), (20.0, 20.0));
        assert_eq!(stats.pairwise_hist.counts[20], 4);
        assert_eq!(stats.nearest_neighbor.median, 20.0);
        assert_eq!(stats.cluster_counts, vec![1; 4]);
    }

    #[test]
    fn group_count_uses_linkage() {
        let at = |x: f64| NodeKinematics::new(Vec3::new(x, 0.0, 0.0), Vec3::zeros());
        let nodes = [at(0.0), at(40.0), at(80.0), at(200.0)];
        assert_eq!(count_groups(&nodes, 50.0), 2);
        assert_eq!(count_groups(&nodes, 30.0), 4);
    }

    #[test]
    fn csv_round_trip() {
        let trace = generate_trace(&small_config(5), 9).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("# seed 9"));
        assert!(text.contains("t,node_id,px,py,pz,vx,vy,vz"));
        let back = GroundTruthTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 5);
        assert_eq!(back.seed(), 9);
        assert_eq!(back.config(), trace.config());
        for t in 0..5 {
            assert_eq!(back.snapshot(t), trace.snapshot(t));
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "t,node_id,px,py,pz,vx,vy,vz\n0,0,1,2,3,4,5\n";
        match GroundTruthTrace::read_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
