mod common;

use proptest::prelude::*;
use rand::Rng;
use slyap::example::example_system;
use slyap::flows::{simulate, SimTarget};
use slyap::inclusion::{
    hat_lower_greedy, hat_upper_bound, hausdorff, kset_estimate, kset_homogeneity_check, HatConfig, KsetConfig,
};
use slyap::matkit::Mat;
use slyap::model::{BlockMode, BlockSystem, PwcSignal};
use slyap::rng;

fn cfg() -> KsetConfig {
    KsetConfig { signals: 16, horizon_decays: 50.0, tolerance: 0.1, seed: 3 }
}

#[test]
fn doubling_effort_barely_moves_cloud() {
    let sys = example_system::<f64>();
    let a = kset_estimate(&sys, &[1.0], &cfg()).unwrap();
    let more = KsetConfig { signals: 32, horizon_decays: 100.0, ..cfg() };
    let b = kset_estimate(&sys, &[1.0], &more).unwrap();
    assert!(hausdorff(&a.points, &b.points) <= 2.0 * cfg().tolerance);
}

#[test]
fn homogeneous_of_degree_one() {
    let sys = example_system::<f64>();
    for scale in [2.0, -1.0, 0.5] {
        let d = kset_homogeneity_check(&sys, &[1.0], scale, &cfg()).unwrap();
        assert!(d <= 2.0 * cfg().tolerance, "scale {scale}: {d}");
    }
}

#[test]
fn lipschitz_with_fitted_constant() {
    let sys = example_system::<f64>();
    let tol = cfg().tolerance;
    let mut r = rng::substream(0, "lipschitz-test", 0);
    let mut pairs: Vec<(f64, f64, f64)> = (0..8)
        .map(|_| {
            let (x1, x2) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
            let k1 = kset_estimate(&sys, &[x1], &cfg()).unwrap();
            let k2 = kset_estimate(&sys, &[x2], &cfg()).unwrap();
            (x1, x2, hausdorff(&k1.points, &k2.points))
        })
        .collect();
    let fit: Vec<_> = pairs.drain(..4).collect();
    let l = fit.iter().map(|(a, b, d)| (d - 2.0 * tol).max(0.0) / (a - b).abs()).fold(0.0, f64::max);
    // The scalar example has K(x) = [min(0, 20x), max(0, 20x)], so L = 20.
    assert!(l <= 20.0 + 1e-9, "{l}");
    for (a, b, d) in pairs {
        assert!(d <= 20.0 * (a - b).abs() + 2.0 * tol, "{a} {b} {d}");
    }
}

#[test]
fn cloud_is_forward_invariant() {
    let sys = example_system::<f64>();
    let cloud = kset_estimate(&sys, &[1.0], &cfg()).unwrap();
    let tol = cfg().tolerance;
    let mut r = rng::substream(0, "attraction-test", 0);
    for i in 0..6 {
        let start = cloud.points[(i * 97) % cloud.points.len()].clone();
        let pairs: Vec<(usize, f64)> = (0..20).map(|_| (r.gen_range(0..2), rng::exponential(&mut r, 10.0).max(1e-3))).collect();
        let sig = PwcSignal::from_pairs(&pairs).unwrap();
        let traj = simulate(&sys, &sig, &SimTarget::Fast(vec![1.0]), &start, 0.5).unwrap();
        for y in &traj.states {
            let d = cloud.points.iter().map(|p| (p[0] - y[0]).abs()).fold(f64::INFINITY, f64::min);
            assert!(d <= tol, "point {y:?} at distance {d}");
        }
    }
}

#[test]
fn cloud_within_a_priori_radius() {
    let sys = example_system::<f64>();
    let cloud = kset_estimate(&sys, &[1.0], &cfg()).unwrap();
    assert!(cloud.points.iter().all(|p| p[0].abs() <= cloud.radius + cloud.tolerance));
}

fn hat_cfg() -> HatConfig {
    HatConfig { directions: 16, kset: cfg(), greedy_horizon: 5.0, greedy_step: 0.02 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn greedy_below_upper(a in -2.0..0.0f64, b in -1.0..1.0f64, c in -2.0..2.0f64, d in -3.0..-0.5f64) {
        let s = |x: f64| Mat::scalar(x);
        let sys = BlockSystem::new(1, 1, vec![
            BlockMode { a: s(a), b: s(b), c: s(c), d: s(d) },
            BlockMode { a: s(-1.0), b: s(1.0), c: s(0.0), d: s(-1.0) },
        ]).unwrap();
        let cfg = hat_cfg();
        let up = hat_upper_bound(&sys, &cfg).unwrap().value;
        let lo = hat_lower_greedy(&sys, &[1.0], &cfg).unwrap().value;
        prop_assert!(lo <= up + 2.0 * cfg.kset.tolerance, "{lo} > {up}");
    }
}
