use crate::movement::GroundTruthTrace;
use crate::{Error, Result, Vec3};

/// Running mean and variance (Welford) of position errors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorStats {
    pub count: u64,
    mean: f64,
    m2: f64,
}

impl ErrorStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Folds another accumulator into this one (Chan et al. pairwise update).
    pub fn merge(&mut self, other: &ErrorStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).sqrt()
        }
    }
}

/// Error metrics of a set of per-second tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub node_mean_error: Vec<f64>,
    /// Mean over every node-second.
    pub mean_error: f64,
    /// Standard deviation over every node-second.
    pub std_error: f64,
}

/// Per-second 3D Euclidean error of `tracks[node][t]` against the trace.
pub fn score_run(tracks: &[Vec<Vec3>], trace: &GroundTruthTrace) -> Result<Scores> {
    if tracks.len() != trace.n_nodes() {
        return Err(Error::LengthMismatch {
            expected: trace.n_nodes(),
            got: tracks.len(),
        });
    }
    let mut all = ErrorStats::default();
    let mut node_mean_error = Vec::with_capacity(tracks.len());
    for (i, track) in tracks.iter().enumerate() {
        if track.len() != trace.len() {
            return Err(Error::LengthMismatch {
                expected: trace.len(),
                got: track.len(),
            });
        }
        let mut node = ErrorStats::default();
        for (t, est) in track.iter().enumerate() {
            let e = (est - trace.at(t, i).position).norm();
            node.push(e);
        }
        all.merge(&node);
        node_mean_error.push(node.mean());
    }
    Ok(Scores {
        node_mean_error,
        mean_error: all.mean(),
        std_error: all.std(),
    })
}
