// Success paths only: building a JsError needs a JavaScript host.
use actin_edge_wasm::{bifurcation, steady_profile, Simulation};

#[test]
fn bifurcation_point_at_unit_speed() {
    let out = bifurcation(false, 1.0).unwrap();
    assert!((out[0] - 2.261826334114652).abs() < 1e-10);
    assert!(out[2] > 0.0 && out[3] > 0.0);
    assert_eq!(bifurcation(true, 1.0).unwrap()[0], 1.0);
}

#[test]
fn simulation_advances_and_stays_nonnegative() {
    let mut sim = Simulation::new(3.0, true, 0.1, 100).unwrap();
    sim.advance(2.0).unwrap();
    assert!((sim.time() - 2.0).abs() < 1e-12);
    sim.perturb(0.5, 1.0).unwrap();
    sim.advance(0.5).unwrap();
    assert!(sim.u().iter().chain(&sim.v()).all(|w| *w >= 0.0));
}

#[test]
fn zero_inflow_perturbation_respects_the_walls() {
    let mut sim = Simulation::new(2.5, false, 0.0, 50).unwrap();
    sim.perturb(0.0, 1.0).unwrap();
    sim.perturb(1.0, 1.0).unwrap();
    assert_eq!(sim.u()[0], 0.0);
    assert_eq!(sim.v()[49], 0.0);
}

#[test]
fn steady_profiles_have_both_families() {
    let dbc = steady_profile(2.5, false, 0.0, 80).unwrap();
    assert_eq!(dbc.len(), 160);
    assert!((dbc[0] - dbc[159]).abs() < 1e-10);
    let pbc = steady_profile(3.0, true, 0.0, 40).unwrap();
    assert!(pbc.iter().all(|w| (w - 1.0).abs() < 1e-12));
}
