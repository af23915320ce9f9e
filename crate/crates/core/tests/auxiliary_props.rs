mod common;

use common::{system, system_and_signal};
use proptest::prelude::*;
use slyap::auxiliary::{check_bound, lambda_parts, reduced_modes, sample_check_modes, CheckSampleConfig};
use slyap::matkit::max_abs_diff;
use slyap::model::PwcSignal;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reconstruction((sys, sig) in system_and_signal(3, 5)) {
        let p = lambda_parts(&sys, &sig).unwrap();
        let r = p.reconstruct().unwrap();
        prop_assert!(max_abs_diff(&r, &p.lambda) <= 1e-12 * p.lambda.norm_max().max(1.0));
    }

    #[test]
    fn constant_collapse_and_t_invariance(sys in system(3), pick in 0..3usize) {
        let reduced = reduced_modes(&sys).unwrap();
        for (i, red) in reduced.iter().enumerate() {
            let scale = red.norm_max().max(1.0);
            let base = lambda_parts(&sys, &PwcSignal::constant(i, [0.1, 1.0, 10.0][pick])).unwrap().lambda;
            prop_assert!(max_abs_diff(&base, red) <= 1e-9 * scale);
            for t in [0.1, 1.0, 10.0] {
                let l = lambda_parts(&sys, &PwcSignal::constant(i, t)).unwrap().lambda;
                prop_assert!(max_abs_diff(&l, &base) <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn sample_contains_reduced_and_is_bounded(sys in system(2), seed in 0..1000u64) {
        let cfg = CheckSampleConfig { count: 24, seed, ..CheckSampleConfig::default() };
        let sample = sample_check_modes(&sys, &cfg, &[]).unwrap();
        let reduced = reduced_modes(&sys).unwrap();
        for (s, r) in sample.iter().zip(&reduced) {
            prop_assert_eq!(&s.lambda, r);
        }
        let decay = sys.assumption().require().unwrap();
        let bound = check_bound(&sys, &decay).value;
        for s in &sample {
            prop_assert!(s.lambda.norm2() <= bound, "{} > {}", s.lambda.norm2(), bound);
        }
    }
}

#[test]
fn expansion_constant_stable_on_example() {
    use slyap::auxiliary::{default_eps_ladder, expansion_report};
    let sys = slyap::example::example_system::<f64>();
    let rep = expansion_report(&sys, &slyap::example::example_signal(), 0.0, &default_eps_ladder::<f64>()).unwrap();
    let k1: Vec<f64> = rep.residuals.iter().map(|r| r.r1_over_eps2).collect();
    let k2: Vec<f64> = rep.residuals.iter().map(|r| r.r2_over_eps).collect();
    let ratio = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(ratio(&k1) < 4.0 && ratio(&k2) < 4.0, "{k1:?} {k2:?}");
}
