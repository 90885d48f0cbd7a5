/// Linear position-uncertainty model: `u = e0 + v_bar * (t - t_last)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyTracker {
    pub u_now: f64,
    /// Speed assumed since the last update, m/s.
    pub v_bar: f64,
    pub t_last_update: f64,
    /// Uncertainty right after the last update, m.
    pub e0: f64,
}

impl UncertaintyTracker {
    pub fn new(t: f64, e0: f64, v_bar: f64) -> Self {
        Self {
            u_now: e0,
            v_bar,
            t_last_update: t,
            e0,
        }
    }

    /// Uncertainty at time `t` without changing the tracker.
    pub fn at(&self, t: f64) -> f64 {
        self.e0 + self.v_bar * (t - self.t_last_update).max(0.0)
    }

    /// Position update at `t`: the new fix is believed good to `e0` metres.
    pub fn reset(&mut self, t: f64, e0: f64, v_bar: f64) {
        *self = Self::new(t, e0, v_bar);
    }

    pub fn exceeds(&self, limit: f64) -> bool {
        self.u_now >= limit
    }
}

/// Advances the tracker by `dt` seconds with speed estimate `v_bar`.
pub fn step_uncertainty(tracker: &UncertaintyTracker, dt: f64, v_bar: f64) -> UncertaintyTracker {
    UncertaintyTracker {
        u_now: tracker.u_now + v_bar * dt,
        v_bar,
        ..*tracker
    }
}

/// Average of the members' current uncertainties, compared against one limit.
pub fn cluster_uncertainty(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
