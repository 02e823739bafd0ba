use std::f64::consts::PI;

use bohmvar::fields::weak_field;
use bohmvar::trajectories::{integrate_trajectory, weak_value_series};
use bohmvar::{parse_state, OperatorRequest};

#[test]
fn orbit_average_matches_ring_average() {
    let psi = parse_state("ho2d_angular:l=1").unwrap();
    for r0 in [0.5, 1.0, 1.7] {
        let period = 2.0 * PI * r0 * r0;
        let steps = 2000;
        let path = integrate_trajectory(&psi, &[r0, 0.0], period, period / steps as f64).unwrap();
        for name in ["momentum:axis=1", "kinetic", "position:axis=2"] {
            let op = OperatorRequest::parse(name, psi.units()).unwrap().build_for(&psi).unwrap();
            let series = weak_value_series(&op, &psi, &path).unwrap();
            // trapezoid over one closed period
            let time_avg = (series[1..steps].iter().sum::<f64>() + 0.5 * (series[0] + series[steps])) / steps as f64;
            let ring: f64 = (0..steps)
                .map(|k| {
                    let phi = 2.0 * PI * k as f64 / steps as f64;
                    weak_field(&op, &psi, &[r0 * phi.cos(), r0 * phi.sin()]).unwrap()
                })
                .sum::<f64>()
                / steps as f64;
            assert!((time_avg - ring).abs() < 1e-9, "r = {r0} {name}: {time_avg} vs {ring}");
        }
    }
}

#[test]
fn momentum_along_unit_orbit_is_a_unit_sinusoid() {
    let psi = parse_state("ho2d_angular:l=1").unwrap();
    let op = OperatorRequest::parse("momentum:axis=1", psi.units()).unwrap().build_for(&psi).unwrap();
    let path = integrate_trajectory(&psi, &[1.0, 0.0], 2.0 * PI, 1e-3).unwrap();
    let series = weak_value_series(&op, &psi, &path).unwrap();
    for (t, a) in path.times().zip(&series) {
        assert!((a + t.sin()).abs() < 1e-9, "t = {t}");
    }
    let max = series.iter().cloned().fold(f64::MIN, f64::max);
    assert!((max - 1.0).abs() < 1e-6);
}

#[test]
fn energy_is_constant_on_static_paths() {
    let psi = parse_state("ho1d:n=1").unwrap();
    let op = OperatorRequest::parse("hamiltonian", psi.units()).unwrap().build_for(&psi).unwrap();
    let path = integrate_trajectory(&psi, &[0.3], 5.0, 0.01).unwrap();
    assert!(path.points.iter().all(|p| p[0] == 0.3));
    for a in weak_value_series(&op, &psi, &path).unwrap() {
        assert!((a - 1.5).abs() < 1e-12);
    }
}
