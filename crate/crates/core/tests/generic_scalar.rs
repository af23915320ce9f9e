use slyap::auxiliary::lambda_parts;
use slyap::example::{example_signal, example_system, lambda_closed_form};
use slyap::flows::eps_flow;
use slyap::matkit::spectral_radius;
use slyap::{Signal32, System32};

#[test]
fn single_precision_tracks_double() {
    let sys: System32 = example_system();
    let sig: Signal32 = example_signal();
    let lam = lambda_parts(&sys, &sig).unwrap().lambda[(0, 0)];
    assert!((f64::from(lam) - lambda_closed_form()).abs() < 1e-4);

    let period = sig.time_scaled(0.1).unwrap();
    let rho = spectral_radius(&eps_flow(&sys, &period, 0.1f32).unwrap().phi).unwrap();
    assert!((f64::from(rho) - 1.1673113175700556).abs() < 1e-5);
}

#[test]
fn cast_round_trip() {
    // Widening is exact, so narrowing the widened system recovers it.
    let sys = example_system::<f32>();
    let back = sys.cast::<f64>().cast::<f32>();
    assert_eq!(back, sys);
}
