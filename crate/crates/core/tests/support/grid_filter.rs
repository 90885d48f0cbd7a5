//! Brute-force Bayesian filter on a 1D grid, used as an oracle for the Kalman filter.
//!
//! The density lives on a uniform grid. Prediction convolves it with the
//! Gaussian transition kernel through an FFT, update multiplies by the
//! Gaussian likelihood and renormalises.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub struct GridFilter {
    pub x0: f64,
    pub h: f64,
    pub density: Vec<f64>,
    n_fft: usize,
    planner: FftPlanner<f64>,
}

fn gaussian(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp()
}

impl GridFilter {
    /// Grid over `[-half_width, half_width]` with spacing `h`, prior N(mean, var).
    pub fn new(half_width: f64, h: f64, mean: f64, var: f64) -> Self {
        let n = (2.0 * half_width / h).round() as usize + 1;
        let x0 = -half_width;
        let density = (0..n).map(|i| gaussian(x0 + i as f64 * h, mean, var)).collect();
        let mut g = Self {
            x0,
            h,
            density,
            n_fft: n.next_power_of_two(),
            planner: FftPlanner::new(),
        };
        g.normalise();
        g
    }

    fn normalise(&mut self) {
        let s: f64 = self.density.iter().sum();
        self.density.iter_mut().for_each(|d| *d /= s);
    }

    pub fn mean(&self) -> f64 {
        self.density
            .iter()
            .enumerate()
            .map(|(i, d)| (self.x0 + i as f64 * self.h) * d)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.density
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let x = self.x0 + i as f64 * self.h;
                (x - m) * (x - m) * d
            })
            .sum()
    }

    /// Convolution with the transition density N(shift, q).
    pub fn predict(&mut self, shift: f64, q: f64) {
        let n = self.n_fft;
        let reach = ((shift.abs() + 12.0 * q.sqrt()) / self.h).ceil() as i64;
        let mut kernel = vec![Complex::new(0.0, 0.0); n];
        for j in -reach..=reach {
            let idx = j.rem_euclid(n as i64) as usize;
            kernel[idx].re = gaussian(j as f64 * self.h, shift, q);
        }
        let mut signal = vec![Complex::new(0.0, 0.0); n];
        for (s, d) in signal.iter_mut().zip(&self.density) {
            s.re = *d;
        }
        let fwd = self.planner.plan_fft_forward(n);
        let inv = self.planner.plan_fft_inverse(n);
        fwd.process(&mut kernel);
        fwd.process(&mut signal);
        for (s, k) in signal.iter_mut().zip(&kernel) {
            *s *= *k;
        }
        inv.process(&mut signal);
        let len = self.density.len();
        for (d, s) in self.density.iter_mut().zip(signal.iter().take(len)) {
            *d = s.re.max(0.0);
        }
        self.normalise();
    }

    pub fn update(&mut self, z: f64, r: f64) {
        for (i, d) in self.density.iter_mut().enumerate() {
            *d *= gaussian(self.x0 + i as f64 * self.h, z, r);
        }
        self.normalise();
    }
}

/// One randomized linear-Gaussian scenario.
pub struct Scenario {
    pub x0: f64,
    pub p0: f64,
    pub q: f64,
    pub r: f64,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

impl Scenario {
    pub fn random(seed: u64, steps: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0: f64 = rng.random_range(-10.0..10.0);
        let p0: f64 = rng.random_range(1.0..25.0);
        let q: f64 = rng.random_range(0.05..1.0);
        let r: f64 = rng.random_range(0.5..25.0);
        let mut truth = x0 + p0.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let mut u = Vec::with_capacity(steps);
        let mut z = Vec::with_capacity(steps);
        for _ in 0..steps {
            let uk = rng.random_range(-1.0..1.0);
            truth += uk + q.sqrt() * rng.sample::<f64, _>(StandardNormal);
            u.push(uk);
            z.push(truth + r.sqrt() * rng.sample::<f64, _>(StandardNormal));
        }
        Self { x0, p0, q, r, u, z }
    }

    /// Posterior means of the grid filter after each predict/update step.
    pub fn grid_means(&self) -> Vec<f64> {
        let mut g = GridFilter::new(100.0, 0.01, self.x0, self.p0);
        self.u
            .iter()
            .zip(&self.z)
            .map(|(&u, &z)| {
                g.predict(u, self.q);
                g.update(z, self.r);
                g.mean()
            })
            .collect()
    }
}
