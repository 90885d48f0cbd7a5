use cotrack::energy::{accmag_cost_per_second, gps_fix_cost, Category};
use cotrack::movement::{generate_trace, FlockConfig, GroundTruthTrace, NodeKinematics};
use cotrack::schemes::{
    run_baseline_vm, run_cluster_ckf, run_cluster_standard, run_dynamic_cluster, run_dynamic_individual,
    run_individual_periodic, run_scheme, run_scheme_with, score_run, DynamicVariant, RunOptions, SchemeConfig,
    SchemeKind, SimParams,
};
use cotrack::Vec3;
use proptest::prelude::*;

/// Nodes start at `starts` and move with constant `velocities`.
fn linear_trace(starts: &[Vec3], velocities: &[Vec3], len: usize) -> GroundTruthTrace {
    let mut samples = Vec::with_capacity(starts.len() * len);
    for t in 0..len {
        for (p, v) in starts.iter().zip(velocities) {
            samples.push(NodeKinematics::new(p + v * t as f64, *v));
        }
    }
    GroundTruthTrace::from_samples(starts.len(), 1.0, 0, samples).unwrap()
}

fn convoy(n: usize, spacing: f64, len: usize) -> GroundTruthTrace {
    let starts: Vec<Vec3> = (0..n).map(|i| Vec3::new(0.0, spacing * i as f64, 100.0)).collect();
    linear_trace(&starts, &vec![Vec3::new(6.0, 0.0, 0.0); n], len)
}

fn noiseless() -> SimParams {
    let mut p = SimParams::default();
    p.gps.sigma_pos = 0.0;
    p.gps.sigma_vel = 0.0;
    p.imu.noise_density = 0.0;
    p
}

fn small_flock(seed: u64, n: usize, duration_s: u32) -> GroundTruthTrace {
    let cfg = FlockConfig {
        n_nodes: n,
        duration_s,
        ..FlockConfig::default()
    };
    generate_trace(&cfg, seed).unwrap()
}

fn gps_j(r: &cotrack::schemes::RunResult) -> f64 {
    r.nodes.iter().map(|n| n.energy(Category::Gps)).sum()
}

#[test]
fn individual_fix_count_over_a_full_track() {
    let trace = convoy(1, 0.0, 43_200);
    let p = SimParams::default();
    let r = run_individual_periodic(&trace, 10.0, &p, 1).unwrap();
    assert_eq!(r.nodes[0].fixes, 4320);
    assert!((r.nodes[0].energy(Category::Gps) - 1883.52).abs() < 1e-6);
    let r = run_individual_periodic(&trace, 100.0, &p, 1).unwrap();
    assert_eq!(r.nodes[0].fixes, 432);
    assert!((r.nodes[0].energy(Category::Gps) - 432.0 * gps_fix_cost(&p.energy)).abs() < 1e-6);
    // 54 J of miscellaneous drain spread over the 12 h track.
    assert!((r.nodes[0].energy(Category::Misc) - 54.0).abs() < 1e-6);
}

#[test]
fn noiseless_straight_line_is_tracked_exactly() {
    let trace = convoy(3, 200.0, 1001);
    let r = run_individual_periodic(&trace, 10.0, &noiseless(), 4).unwrap();
    assert!(r.mean_error_m < 1e-9, "{}", r.mean_error_m);
    assert_eq!(r.messages_sent, 0);
}

#[test]
fn held_fixes_on_a_straight_line_score_the_interpolation_gap() {
    // With noisy fixes the interpolated track is off by at most the fix noise.
    let trace = convoy(2, 500.0, 1001);
    let p = SimParams::default();
    let r = run_individual_periodic(&trace, 10.0, &p, 9).unwrap();
    assert!(r.mean_error_m > 5.0 && r.mean_error_m < 20.0, "{}", r.mean_error_m);
}

#[test]
fn isolated_nodes_form_singleton_clusters_that_act_individually() {
    let trace = convoy(3, 1000.0, 601);
    let p = SimParams::default();
    let ind = run_individual_periodic(&trace, 20.0, &p, 5).unwrap();
    let cl = run_cluster_standard(&trace, 20.0, &p, 5).unwrap();
    assert_eq!(cl.mean_clusters, 3.0);
    for (a, b) in ind.nodes.iter().zip(&cl.nodes) {
        assert_eq!(a.fixes, b.fixes);
        assert_eq!(a.energy(Category::Gps), b.energy(Category::Gps));
        assert_eq!(a.energy(Category::Rx), 0.0);
        assert_eq!(b.energy(Category::Rx), 0.0);
    }
    assert!((ind.mean_error_m - cl.mean_error_m).abs() < 1e-12);
    // Only the election claims cost anything extra.
    assert_eq!(cl.messages_sent, 3);
    assert!(cl.total_energy_j > ind.total_energy_j);
    assert!(cl.total_energy_j - ind.total_energy_j < 1e-3);
}

#[test]
fn one_stable_cluster_shares_each_fix() {
    // Twenty nodes within 20 m of each other: one cluster, one fix per instant.
    let starts: Vec<Vec3> = (0..20)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / 20.0;
            Vec3::new(20.0 * a.cos(), 20.0 * a.sin(), 100.0)
        })
        .collect();
    let trace = linear_trace(&starts, &vec![Vec3::new(6.0, 0.0, 0.0); 20], 1001);
    let p = SimParams::default();
    let r = run_cluster_standard(&trace, 10.0, &p, 2).unwrap();
    assert_eq!(r.mean_clusters, 1.0);
    let fixes: u64 = r.nodes.iter().map(|n| n.fixes).sum();
    assert_eq!(fixes, 20 + 100);
    assert!((gps_j(&r) - 120.0 * gps_fix_cost(&p.energy)).abs() < 1e-6);
    let ind = run_individual_periodic(&trace, 10.0, &p, 2).unwrap();
    assert!(r.total_energy_j < 0.3 * ind.total_energy_j);
    assert!(r.mean_error_m >= ind.mean_error_m);
}

#[test]
fn zero_noise_ckf_converges_on_constant_velocity() {
    let trace = convoy(1, 0.0, 501);
    let r = run_cluster_ckf(&trace, 50.0, &noiseless(), 3, false).unwrap();
    assert!(r.mean_error_m < 1e-4, "{}", r.mean_error_m);
    let r = run_cluster_ckf(&trace, 50.0, &noiseless(), 3, true).unwrap();
    assert!(r.mean_error_m < 1e-4, "{}", r.mean_error_m);
}

#[test]
fn imu_energy_overhead_over_a_full_track() {
    let trace = convoy(2, 500.0, 43_200);
    let p = SimParams::default();
    let plain = run_cluster_ckf(&trace, 100.0, &p, 8, false).unwrap();
    let imu = run_cluster_ckf(&trace, 100.0, &p, 8, true).unwrap();
    let expected = 43_200.0 * accmag_cost_per_second(&p.energy);
    assert!((expected - 3.051).abs() < 1e-3);
    for (a, b) in plain.nodes.iter().zip(&imu.nodes) {
        assert_eq!(a.energy(Category::AccMag), 0.0);
        assert!((b.energy(Category::AccMag) - expected).abs() < 1e-6);
        assert!((b.total_energy() - a.total_energy() - expected).abs() < 1e-6);
    }
}

#[test]
fn single_node_dynamic_interval_is_seven_seconds() {
    // Fix accuracy 10 m, speed 6 m/s, limit 50 m: (50 - 10) / 6 rounds up to 7.
    let mut p = SimParams::default();
    p.gps.sigma_vel = 0.0;
    let trace = convoy(1, 0.0, 71);
    let r = run_dynamic_individual(&trace, 50.0, &p, 0).unwrap();
    assert_eq!(r.nodes[0].fixes, 11);
    let r = run_dynamic_cluster(&trace, 50.0, &p, 0, DynamicVariant::Standard).unwrap();
    assert_eq!(r.nodes[0].fixes, 11);
}

#[test]
fn stationary_node_never_resamples() {
    let trace = linear_trace(&[Vec3::new(0.0, 0.0, 100.0)], &[Vec3::zeros()], 500);
    let r = run_dynamic_individual(&trace, 50.0, &noiseless(), 0).unwrap();
    assert_eq!(r.nodes[0].fixes, 1);
}

#[test]
fn vm_adopts_a_fruitful_neighbour_reply() {
    // Node 0 drives past a stationary node 1 whose uncertainty stays at 10 m.
    let mut p = SimParams::default();
    p.gps.sigma_vel = 0.0;
    let trace = linear_trace(
        &[Vec3::new(-40.0, 0.0, 100.0), Vec3::new(0.0, 0.0, 100.0)],
        &[Vec3::new(6.0, 0.0, 0.0), Vec3::zeros()],
        16,
    );
    let r = run_baseline_vm(&trace, 100.0, &p, 1).unwrap();
    assert_eq!(r.nodes[0].fixes, 1);
    assert_eq!(r.nodes[0].energy(Category::Gps), gps_fix_cost(&p.energy));
    // One request and one reply.
    assert_eq!(r.messages_sent, 2);
    assert_eq!(r.messages_received, 2);
}

#[test]
fn isolated_vm_node_samples_like_individual_dynamic() {
    let trace = convoy(3, 1000.0, 2000);
    let p = SimParams::default();
    let vm = run_baseline_vm(&trace, 100.0, &p, 6).unwrap();
    let ind = run_dynamic_individual(&trace, 90.0, &p, 6).unwrap();
    for (a, b) in vm.nodes.iter().zip(&ind.nodes) {
        assert_eq!(a.fixes, b.fixes);
        assert_eq!(a.energy(Category::Rx), 0.0);
    }
    assert!((vm.mean_error_m - ind.mean_error_m).abs() < 1e-12);
    assert!(vm.messages_sent > 0);
    assert_eq!(vm.messages_received, 0);
}

#[test]
fn synchronized_vm_requests_all_fail() {
    // Everyone fixed together, so every neighbour is as stale as the requester.
    let trace = convoy(4, 10.0, 600);
    let mut p = SimParams::default();
    p.gps.sigma_vel = 0.0;
    let vm = run_baseline_vm(&trace, 100.0, &p, 2).unwrap();
    let ind = run_dynamic_individual(&trace, 90.0, &p, 2).unwrap();
    let vm_fixes: u64 = vm.nodes.iter().map(|n| n.fixes).sum();
    let ind_fixes: u64 = ind.nodes.iter().map(|n| n.fixes).sum();
    assert!(vm_fixes <= ind_fixes);
    assert!(vm_fixes as f64 >= 0.25 * ind_fixes as f64);
}

#[test]
fn runs_are_deterministic() {
    let trace = small_flock(11, 8, 1500);
    let again = small_flock(11, 8, 1500);
    assert_eq!(trace, again);
    let p = SimParams::default();
    for kind in SchemeKind::ALL {
        let cfg = SchemeConfig::at(kind, if kind.is_dynamic() { 100.0 } else { 30.0 });
        let a = run_scheme(&trace, &cfg, &p, 3).unwrap();
        let b = run_scheme(&trace, &cfg, &p, 3).unwrap();
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn kept_tracks_rescore_to_the_reported_error() {
    let trace = small_flock(2, 6, 1200);
    let p = SimParams::default();
    let opts = RunOptions {
        keep_tracks: true,
        record_events: false,
    };
    for kind in [
        SchemeKind::IndividualPeriodic,
        SchemeKind::ClusterStandard,
        SchemeKind::ClusterCkfAccMag,
    ] {
        let r = run_scheme_with(&trace, &SchemeConfig::periodic(kind, 20.0), &p, 1, opts).unwrap();
        let s = score_run(r.tracks.as_ref().unwrap(), &trace).unwrap();
        assert!((s.mean_error - r.mean_error_m).abs() < 1e-9, "{kind}");
        assert!((s.std_error - r.std_error_m).abs() < 1e-9, "{kind}");
        for (a, b) in s.node_mean_error.iter().zip(&r.nodes) {
            assert!((a - b.mean_error_m).abs() < 1e-9);
        }
    }
}

#[test]
fn exhausted_batteries_still_balance() {
    let trace = small_flock(4, 6, 800);
    let mut p = SimParams::default();
    p.energy.battery_j = 3.0;
    for kind in SchemeKind::ALL {
        let cfg = SchemeConfig::at(kind, if kind.is_dynamic() { 50.0 } else { 10.0 });
        let r = run_scheme(&trace, &cfg, &p, 0).unwrap();
        assert!(r.conserved(), "{kind}");
        assert!(r.nodes.iter().any(|n| n.death_s.is_some()), "{kind}");
        for n in &r.nodes {
            assert!(n.total_energy() <= 3.0 + 1e-9);
        }
    }
}

#[test]
fn events_are_recorded_on_request() {
    let trace = small_flock(1, 6, 600);
    let p = SimParams::default();
    let cfg = SchemeConfig::periodic(SchemeKind::ClusterStandard, 10.0);
    let quiet = run_scheme(&trace, &cfg, &p, 0).unwrap();
    assert!(quiet.events.is_empty());
    let opts = RunOptions {
        keep_tracks: false,
        record_events: true,
    };
    let loud = run_scheme_with(&trace, &cfg, &p, 0, opts).unwrap();
    assert!(!loud.events.is_empty());
    assert_eq!(loud.mean_error_m, quiet.mean_error_m);
}

#[test]
fn invalid_sweep_values_are_rejected() {
    let trace = convoy(1, 0.0, 100);
    let p = SimParams::default();
    assert!(run_individual_periodic(&trace, 0.0, &p, 0).is_err());
    assert!(run_dynamic_individual(&trace, -5.0, &p, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn dynamic_fixes_do_not_grow_with_the_limit(seed in 0u64..1000) {
        let trace = small_flock(seed, 5, 1500);
        let p = SimParams::default();
        let mut last = u64::MAX;
        for limit in [50.0, 150.0, 250.0, 350.0, 450.0] {
            let r = run_dynamic_individual(&trace, limit, &p, seed).unwrap();
            let fixes: u64 = r.nodes.iter().map(|n| n.fixes).sum();
            prop_assert!(fixes <= last);
            last = fixes;
        }
        let lo = run_dynamic_cluster(&trace, 50.0, &p, seed, DynamicVariant::Standard).unwrap();
        let hi = run_dynamic_cluster(&trace, 450.0, &p, seed, DynamicVariant::Standard).unwrap();
        prop_assert!(lo.mean_fixes > hi.mean_fixes);
    }

    #[test]
    fn every_scheme_conserves_energy(seed in 0u64..1000, pick in 0usize..9, value in 0.0f64..1.0) {
        let kind = SchemeKind::ALL[pick];
        let trace = small_flock(seed, 6, 600);
        let cfg = if kind.is_dynamic() {
            SchemeConfig::dynamic(kind, 50.0 + 400.0 * value)
        } else {
            SchemeConfig::periodic(kind, (10.0 + 90.0 * value).round())
        };
        let r = run_scheme(&trace, &cfg, &SimParams::default(), seed).unwrap();
        prop_assert!(r.conserved());
        prop_assert!(r.mean_error_m.is_finite());
        let sum: f64 = r.nodes.iter().map(|n| n.total_energy()).sum();
        prop_assert!((sum - r.total_energy_j).abs() < 1e-9);
    }
}
