//! Per-node position estimators.
//!
//! The cooperative Kalman filter tracks position only: the state is
//! `[px, py, pz]`, the control input is a velocity and the measurement is a
//! (possibly borrowed) GPS position, so `A = C = I` and `B = dt * I`.

use crate::sensors::GpsFix;
use crate::{Error, Mat3, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfModel {
    pub dt: f64,
}

impl Default for KfModel {
    fn default() -> Self {
        Self { dt: 1.0 }
    }
}

impl KfModel {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("kf.dt", format!("must be > 0, got {dt}")));
        }
        Ok(Self { dt })
    }

    pub fn a(&self) -> Mat3 {
        Mat3::identity()
    }

    pub fn b(&self) -> Mat3 {
        Mat3::identity() * self.dt
    }

    pub fn c(&self) -> Mat3 {
        Mat3::identity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfState {
    pub x: Vec3,
    pub p: Mat3,
    /// Control input (velocity) held until the next fix or inertial update.
    pub u: Vec3,
    pub t_last: f64,
}

impl KfState {
    pub fn new(x: Vec3, p: Mat3, u: Vec3, t_last: f64) -> Self {
        Self { x, p, u, t_last }
    }

    /// Initialises a filter from a fix, trusting it with covariance `r`.
    pub fn from_fix(fix: &GpsFix, r: Mat3) -> Self {
        Self::new(fix.position, r, fix.velocity, fix.timestamp)
    }
}

fn finite_vec(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

fn finite_mat(m: &Mat3) -> bool {
    m.iter().all(|c| c.is_finite())
}

fn symmetrize(m: Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

/// `x <- A x + B u`, `P <- A P A^T + Q`. The returned state holds `u`.
pub fn kf_predict(state: &KfState, u: Vec3, model: &KfModel, q: &Mat3) -> Result<KfState> {
    if !(finite_vec(&state.x) && finite_vec(&u) && finite_mat(&state.p) && finite_mat(q)) {
        return Err(Error::NonFinite("kf_predict"));
    }
    let a = model.a();
    let x = a * state.x + model.b() * u;
    let p = symmetrize(a * state.p * a.transpose() + q);
    Ok(KfState {
        x,
        p,
        u,
        t_last: state.t_last + model.dt,
    })
}

/// Measurement update with `C = I`: `K = P (P + R)^-1`.
pub fn kf_update(state: &KfState, z: Vec3, model: &KfModel, r: &Mat3) -> Result<KfState> {
    if !(finite_vec(&state.x) && finite_vec(&z) && finite_mat(&state.p) && finite_mat(r)) {
        return Err(Error::NonFinite("kf_update"));
    }
    let c = model.c();
    let s = c * state.p * c.transpose() + r;
    let s_inv = s.try_inverse().ok_or(Error::Singular)?;
    let k = state.p * c.transpose() * s_inv;
    let x = state.x + k * (z - c * state.x);
    let p = symmetrize((Mat3::identity() - k * c) * state.p);
    Ok(KfState {
        x,
        p,
        u: state.u,
        t_last: state.t_last,
    })
}

/// Process noise `diag(std_v^2 dt^2)`.
pub fn build_q(std_v: Vec3, dt: f64) -> Mat3 {
    Mat3::from_diagonal(&std_v.map(|s| s * s * dt * dt))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverContext {
    /// The receiver took this fix itself.
    pub is_sampler: bool,
    pub cluster_radius: f64,
    /// Seconds since the fix was taken.
    pub staleness: f64,
    /// Scale on the cluster radius when inflating a borrowed fix.
    pub kappa: f64,
}

/// Measurement noise for a fix as seen by one receiver.
///
/// Base variance is `pacc^2` per axis. A borrowed fix adds `(kappa * radius)^2`
/// because the sampler can be anywhere within the group radius, and an aged fix
/// adds `(sacc * staleness)^2`.
pub fn build_r(fix: &GpsFix, ctx: &ReceiverContext) -> Mat3 {
    let mut var = fix.pacc * fix.pacc;
    if !ctx.is_sampler {
        let d = ctx.kappa * ctx.cluster_radius;
        var += d * d;
    }
    let drift = fix.sacc * ctx.staleness;
    var += drift * drift;
    Mat3::identity() * var
}

/// Euler step of the held velocity with a world-frame acceleration sample.
pub fn imu_velocity_update(u: Vec3, accel: Vec3, dt: f64) -> Vec3 {
    u + accel * dt
}

/// Most recent adopted position of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldPosition {
    pub position: Vec3,
    pub t: f64,
}

impl HeldPosition {
    pub fn new(position: Vec3, t: f64) -> Self {
        Self { position, t }
    }

    /// Replaces the held position unless `t` predates it.
    pub fn adopt(&mut self, position: Vec3, t: f64) {
        if t >= self.t {
            self.position = position;
            self.t = t;
        }
    }
}

/// Position a node reports at time `t` when it only holds its last fix.
pub fn hold_last_fix(held: &HeldPosition, _t: f64) -> Vec3 {
    held.position
}

/// Per-second track through `(t, position)` samples, sorted by time.
///
/// Piecewise linear between samples and constant outside them. Samples at
/// the same time keep the later one.
pub fn interpolate_track(samples: &[(f64, Vec3)], len: usize, step_s: f64) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(len);
    let Some(&(_, first)) = samples.first() else {
        return vec![Vec3::zeros(); len];
    };
    let mut k = 0usize;
    for i in 0..len {
        let t = i as f64 * step_s;
        while k + 1 < samples.len() && samples[k + 1].0 <= t {
            k += 1;
        }
        let (t0, p0) = samples[k];
        if t < t0 {
            out.push(first);
        } else if k + 1 < samples.len() {
            let (t1, p1) = samples[k + 1];
            let w = (t - t0) / (t1 - t0);
            out.push(p0 + (p1 - p0) * w);
        } else {
            out.push(p0);
        }
    }
    out
}

/// True when `p` is symmetric and its smallest eigenvalue is above `-1e-9 trace`.
pub fn is_psd(p: &Mat3) -> bool {
    let scale = p.trace().abs().max(1e-300);
    if (p - p.transpose()).abs().max() > 1e-9 * scale {
        return false;
    }
    let eig = p.symmetric_eigenvalues();
    eig.min() >= -1e-9 * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(x: Vec3, p: f64) -> KfState {
        KfState::new(x, Mat3::identity() * p, Vec3::zeros(), 0.0)
    }

    fn fix(pacc: f64) -> GpsFix {
        GpsFix {
            timestamp: 0.0,
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            pacc,
            sacc: 0.5,
            sampler_id: 0,
        }
    }

    #[test]
    fn predict_without_input_or_noise_is_identity() {
        let s = state(Vec3::new(1.0, 2.0, 3.0), 4.0);
        let next = kf_predict(&s, Vec3::zeros(), &KfModel::default(), &Mat3::zeros()).unwrap();
        assert_eq!(next.x, s.x);
        assert_eq!(next.p, s.p);
    }

    #[test]
    fn predict_moves_by_velocity() {
        let s = state(Vec3::zeros(), 1.0);
        let next = kf_predict(&s, Vec3::new(6.0, 0.0, 0.0), &KfModel::default(), &Mat3::zeros()).unwrap();
        assert_eq!(next.x, Vec3::new(6.0, 0.0, 0.0));
    }

    #[test]
    fn covariance_accumulates_linearly() {
        let q = Mat3::identity() * 0.3;
        let mut s = state(Vec3::zeros(), 2.0);
        for _ in 0..100 {
            s = kf_predict(&s, Vec3::new(1.0, -1.0, 0.5), &KfModel::default(), &q).unwrap();
        }
        let expected = 2.0 + 100.0 * 0.3;
        for k in 0..3 {
            assert!((s.p[(k, k)] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn near_perfect_measurement_snaps_to_it() {
        let s = state(Vec3::new(5.0, -3.0, 1.0), 10.0);
        let z = Vec3::new(1.0, 2.0, 3.0);
        let post = kf_update(&s, z, &KfModel::default(), &(Mat3::identity() * 1e-12)).unwrap();
        assert!((post.x - z).norm() < 1e-6);
    }

    #[test]
    fn equal_prior_and_noise_split_the_difference() {
        let s = state(Vec3::zeros(), 1.0);
        let post = kf_update(&s, Vec3::new(1.0, 1.0, 1.0), &KfModel::default(), &Mat3::identity()).unwrap();
        for k in 0..3 {
            assert!((post.x[k] - 0.5).abs() < 1e-12);
            assert!((post.p[(k, k)] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_innovation_is_rejected() {
        let s = state(Vec3::zeros(), 0.0);
        let err = kf_update(&s, Vec3::zeros(), &KfModel::default(), &Mat3::zeros()).unwrap_err();
        assert!(matches!(err, Error::Singular));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let s = state(Vec3::zeros(), 1.0);
        let bad = Vec3::new(f64::NAN, 0.0, 0.0);
        assert!(matches!(
            kf_predict(&s, bad, &KfModel::default(), &Mat3::zeros()),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            kf_update(&s, bad, &KfModel::default(), &Mat3::identity()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn model_rejects_bad_dt() {
        assert!(KfModel::new(0.0).is_err());
        assert_eq!(KfModel::new(2.0).unwrap().b(), Mat3::identity() * 2.0);
    }

    #[test]
    fn q_examples() {
        assert_eq!(build_q(Vec3::new(1.0, 1.0, 1.0), 1.0), Mat3::identity());
        let q = build_q(Vec3::new(0.5, 0.5, 0.1), 1.0);
        let expected = Mat3::from_diagonal(&Vec3::new(0.25, 0.25, 0.01));
        assert!((q - expected).abs().max() < 1e-15);
        let q2 = build_q(Vec3::new(0.5, 0.5, 0.1), 2.0);
        assert!((q2 - expected * 4.0).abs().max() < 1e-15);
    }

    #[test]
    fn r_examples() {
        let ctx = ReceiverContext {
            is_sampler: true,
            cluster_radius: 50.0,
            staleness: 0.0,
            kappa: 1.0,
        };
        assert_eq!(build_r(&fix(10.0), &ctx), Mat3::identity() * 100.0);
        let borrowed = ReceiverContext {
            is_sampler: false,
            ..ctx
        };
        assert_eq!(build_r(&fix(10.0), &borrowed), Mat3::identity() * 2600.0);
        let no_inflation = ReceiverContext { kappa: 0.0, ..borrowed };
        assert_eq!(build_r(&fix(10.0), &no_inflation), build_r(&fix(10.0), &ctx));
        let aged = ReceiverContext { staleness: 4.0, ..ctx };
        assert_eq!(build_r(&fix(10.0), &aged), Mat3::identity() * (100.0 + 4.0));
    }

    #[test]
    fn imu_euler_step() {
        let u = Vec3::new(6.0, 0.0, 0.0);
        assert_eq!(imu_velocity_update(u, Vec3::zeros(), 1.0), u);
        assert_eq!(
            imu_velocity_update(u, Vec3::new(-1.0, 0.0, 0.0), 1.0),
            Vec3::new(5.0, 0.0, 0.0)
        );
    }

    #[test]
    fn hold_returns_latest_adoption() {
        let mut h = HeldPosition::new(Vec3::new(1.0, 0.0, 0.0), 0.0);
        assert_eq!(hold_last_fix(&h, 9.0), Vec3::new(1.0, 0.0, 0.0));
        h.adopt(Vec3::new(2.0, 0.0, 0.0), 10.0);
        assert_eq!(hold_last_fix(&h, 10.0), Vec3::new(2.0, 0.0, 0.0));
        h.adopt(Vec3::new(3.0, 0.0, 0.0), 5.0);
        assert_eq!(h.position, Vec3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn held_error_on_straight_line() {
        // 6 m/s, fix at t = 0 held for 10 s: error at the end of the gap is 60 m.
        let h = HeldPosition::new(Vec3::zeros(), 0.0);
        let truth = Vec3::new(60.0, 0.0, 0.0);
        assert!(((truth - hold_last_fix(&h, 10.0)).norm() - 60.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_midpoint_and_ends() {
        let samples = [(0.0, Vec3::zeros()), (10.0, Vec3::new(10.0, 0.0, 0.0))];
        let track = interpolate_track(&samples, 15, 1.0);
        assert_eq!(track[5], Vec3::new(5.0, 0.0, 0.0));
        assert_eq!(track[14], Vec3::new(10.0, 0.0, 0.0));
        let single = interpolate_track(&[(3.0, Vec3::new(1.0, 2.0, 3.0))], 6, 1.0);
        assert!(single.iter().all(|p| *p == Vec3::new(1.0, 2.0, 3.0)));
    }

    #[test]
    fn interpolation_of_collinear_samples_stays_on_the_line() {
        let d = Vec3::new(1.0, 2.0, -0.5).normalize();
        let samples = [(0.0, d * 3.0), (7.0, d * 10.0), (20.0, d * 50.0)];
        for p in interpolate_track(&samples, 25, 1.0) {
            let off_line = p - d * p.dot(&d);
            assert!(off_line.norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn update_keeps_p_psd_and_shrinks_it(
            p in prop::array::uniform3(0.01f64..100.0),
            r in prop::array::uniform3(0.01f64..100.0),
            off in -1.0f64..1.0,
            z in prop::array::uniform3(-50.0f64..50.0),
        ) {
            let mut pm = Mat3::from_diagonal(&Vec3::from(p));
            pm[(0, 1)] = off * (p[0] * p[1]).sqrt() * 0.5;
            pm[(1, 0)] = pm[(0, 1)];
            let s = KfState::new(Vec3::zeros(), pm, Vec3::zeros(), 0.0);
            let rm = Mat3::from_diagonal(&Vec3::from(r));
            let post = kf_update(&s, Vec3::from(z), &KfModel::default(), &rm).unwrap();
            prop_assert!(is_psd(&post.p));
            prop_assert!(post.p.trace() <= s.p.trace() + 1e-9);
            let pred = kf_predict(&post, Vec3::new(1.0, 0.0, 0.0), &KfModel::default(), &rm).unwrap();
            prop_assert!(is_psd(&pred.p));
        }
    }
}
