mod common;

use delaycert::lmi::TheoremParams;
use delaycert::sdp::BarrierSolver;
use delaycert::search::check_stability;
use delaycert::sim::{simulate, DelaySignal, InitialHistory};
use delaycert::system::example1;

#[test]
fn functional_derivative_is_dominated_along_a_trajectory() {
    let sys = example1();
    let params = TheoremParams::new(1.0, 0.8, 0.9, 0.25);
    let cert = check_stability(&sys, &params, &BarrierSolver::default())
        .unwrap()
        .certificate
        .expect("point is certified");
    let delay = DelaySignal::sinusoid(0.5, 0.45, 1.6);
    let traj = simulate(
        &sys,
        &delay,
        &InitialHistory::constant(&[1.0, -0.6]),
        6.0,
        None,
    )
    .unwrap();
    let times: Vec<f64> = (0..20).map(|i| 1.1 + 0.23 * i as f64).collect();
    let samples =
        common::derivative_samples(&sys, &cert, &traj, |t| delay.rate(t), &times).unwrap();
    for s in &samples {
        println!("t={:.3} vdot={:.6e} bound={:.6e}", s.t, s.vdot, s.bound);
        assert!(s.slack() >= -1e-4 * s.scale(), "t = {}", s.t);
    }
}
