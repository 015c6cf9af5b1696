#![allow(dead_code)]

use delaycert::lmi::{assemble, assemble_chi, evaluate_lkf, StateHistory, TheoremParams};
use delaycert::search::StabilityCertificate;
use delaycert::system::DelayedNNSystem;
use delaycert::Result;

/// `(V̇, bound)` at `t`, with `V̇` from a central difference of the functional
/// and `bound = e^{2kt} χᵀ Ξ(t) χ`.
pub struct DerivativeSample {
    pub t: f64,
    pub vdot: f64,
    pub bound: f64,
}

impl DerivativeSample {
    pub fn slack(&self) -> f64 {
        self.bound - self.vdot
    }

    pub fn scale(&self) -> f64 {
        self.vdot.abs() + self.bound.abs() + 1e-300
    }
}

pub fn derivative_samples<H: StateHistory>(
    sys: &DelayedNNSystem,
    cert: &StabilityCertificate,
    hist: &H,
    delay_rate: impl Fn(f64) -> f64,
    times: &[f64],
) -> Result<Vec<DerivativeSample>> {
    let params: TheoremParams = cert.params;
    let lmis = assemble(sys, &params)?;
    let vars = cert.variables(sys.dim())?;
    let x = &cert.witness;
    let base = lmis.base.evaluate(x);
    let rate = lmis.rate.evaluate(x);
    let th1 = lmis.theta1.evaluate(x);
    let th2 = lmis.theta2.evaluate(x);
    let dt = 1e-4;
    times
        .iter()
        .map(|&t| {
            let vp = evaluate_lkf(&vars, hist, sys, &params, t + dt)?;
            let vm = evaluate_lkf(&vars, hist, sys, &params, t - dt)?;
            let vp2 = evaluate_lkf(&vars, hist, sys, &params, t + 2.0 * dt)?;
            let vm2 = evaluate_lkf(&vars, hist, sys, &params, t - 2.0 * dt)?;
            let vdot = (8.0 * (vp - vm) - (vp2 - vm2)) / (12.0 * dt);
            let chi = assemble_chi(hist, sys, &params, t)?;
            let frac = hist.delay(t) / params.h;
            let xi = &base + &rate * delay_rate(t) + &th1 * frac + &th2 * (1.0 - frac);
            let bound = (2.0 * params.k * t).exp() * (chi.transpose() * xi * &chi)[(0, 0)];
            Ok(DerivativeSample { t, vdot, bound })
        })
        .collect()
}
