mod support;

use cotrack::estimation::{kf_predict, kf_update, KfModel, KfState};
use cotrack::{Mat3, Vec3};
use support::grid_filter::{GridFilter, Scenario};

fn kf_means(s: &Scenario) -> Vec<f64> {
    let model = KfModel::default();
    let q = Mat3::identity() * s.q;
    let r = Mat3::identity() * s.r;
    let mut st = KfState::new(Vec3::new(s.x0, 0.0, 0.0), Mat3::identity() * s.p0, Vec3::zeros(), 0.0);
    s.u.iter()
        .zip(&s.z)
        .map(|(&u, &z)| {
            st = kf_predict(&st, Vec3::new(u, 0.0, 0.0), &model, &q).unwrap();
            st = kf_update(&st, Vec3::new(z, 0.0, 0.0), &model, &r).unwrap();
            st.x[0]
        })
        .collect()
}

#[test]
fn grid_filter_tracks_a_known_gaussian() {
    let mut g = GridFilter::new(100.0, 0.01, 2.0, 4.0);
    assert!((g.mean() - 2.0).abs() < 1e-9);
    assert!((g.variance() - 4.0).abs() < 1e-6);
    g.predict(1.5, 0.5);
    assert!((g.mean() - 3.5).abs() < 1e-9);
    assert!((g.variance() - 4.5).abs() < 1e-6);
}

#[test]
fn kalman_matches_grid_filter_on_random_scenarios() {
    for seed in 0..25 {
        let s = Scenario::random(seed, 50);
        let kf = kf_means(&s);
        let grid = s.grid_means();
        let worst = kf.iter().zip(&grid).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "seed {seed}: max deviation {worst}");
    }
}
