//! Certificates at a point, and bisection for the largest decay rate or
//! delay bound over a grid of split points.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue};
use crate::lmi::{assemble, Formulation, LmiVariables, TheoremParams, Var};
use crate::sdp::{verify_witness, FeasibilitySolver, FeasibilityStatus};
use crate::system::DelayedNNSystem;

/// Default split points as fractions of `h`.
pub const DEFAULT_XI_FRACTIONS: [f64; 3] = [0.25, 0.5, 0.75];
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const MAX_BISECTIONS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayBounds {
    pub h: f64,
    pub mu: f64,
}

/// `‖r(t)‖ ≤ E‖φ‖e^{-kt}` with `E = sqrt(Λ/λ_min(P))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lambda: f64,
    pub e: f64,
    /// `sqrt(Λ/λ_max(P))`.
    pub e_with_lambda_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub params: TheoremParams,
    pub witness: Vec<f64>,
    /// Worst normalized eigenvalue of the witness (non-negative).
    pub min_eigenvalue: f64,
    pub margin: f64,
    pub envelope: Envelope,
    pub newton_steps: usize,
}

impl StabilityCertificate {
    pub fn variables(&self, n: usize) -> Result<LmiVariables> {
        LmiVariables::unflatten(&crate::lmi::Layout::new(n), &self.witness)
    }

    /// Re-assembles the problem from the stored parameters and checks the
    /// witness again.
    pub fn reverify(&self, sys: &DelayedNNSystem) -> Result<f64> {
        let lmis = assemble(sys, &self.params)?;
        verify_witness(&lmis.problem, &self.witness)
    }
}

/// The envelope constant from the decision matrices.
pub fn envelope(
    sys: &DelayedNNSystem,
    vars: &LmiVariables,
    params: &TheoremParams,
) -> Result<Envelope> {
    let (h, k) = (params.h, params.k);
    let g = |v| vars.get(v);
    let lmax = |m: &nalgebra::DMatrix<f64>| max_eigenvalue(m);
    let l2 = sys.sector.iter().map(|l| l * l).fold(0.0, f64::max);
    let diag_l = |v: Var| {
        (0..sys.dim())
            .map(|i| g(v)[(i, i)] * sys.sector[i])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let e2kh = (2.0 * k * h).exp();
    let gain = lmax(&(sys.k0_matrix().transpose() * sys.k0_matrix()))?
        + lmax(&(sys.k1.transpose() * &sys.k1))? * l2
        + lmax(&(sys.k2.transpose() * &sys.k2))? * l2;
    let h3 = h * h * h;
    let lambda = lmax(g(Var::P))? * (1.0 + 2.0 * h * h)
        + 2.0 * diag_l(Var::D1)
        + 2.0 * diag_l(Var::D2)
        + h * e2kh * lmax(g(Var::Q))? * (1.0 + l2)
        + h * e2kh * (lmax(g(Var::U1))? + lmax(g(Var::U2))? + lmax(g(Var::U3))?)
        + (1.5 * h3 * (lmax(g(Var::Z1))? + lmax(g(Var::Z3))? + lmax(g(Var::Z4))?)
            + h3 / 6.0 * lmax(g(Var::N1))?
            + h3 / 2.0 * lmax(g(Var::N2))?)
            * gain
        + h * lmax(&(g(Var::M1) + g(Var::M2)))?
        + h3 / 2.0 * lmax(g(Var::Z2))?;
    let pmin = min_eigenvalue(g(Var::P))?;
    if !(pmin > 0.0) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: pmin,
        });
    }
    let pmax = lmax(g(Var::P))?;
    Ok(Envelope {
        lambda,
        e: (lambda / pmin).sqrt(),
        e_with_lambda_max: (lambda / pmax).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub status: FeasibilityStatus,
    pub certificate: Option<StabilityCertificate>,
    pub newton_steps: usize,
}

impl CheckOutcome {
    pub fn certified(&self) -> bool {
        self.certificate.is_some()
    }
}

/// Assembles and solves the certificate LMIs at one parameter point.
pub fn check_stability(
    sys: &DelayedNNSystem,
    params: &TheoremParams,
    solver: &dyn FeasibilitySolver,
) -> Result<CheckOutcome> {
    let kmax = sys.min_k0();
    if !(params.k < kmax) {
        return Err(Error::OutOfRange(format!(
            "k = {} must be below min K0 = {kmax}",
            params.k
        )));
    }
    let lmis = assemble(sys, params)?;
    let res = solver.solve(&lmis.problem)?;
    if res.status != FeasibilityStatus::Feasible {
        return Ok(CheckOutcome {
            status: res.status,
            certificate: None,
            newton_steps: res.newton_steps,
        });
    }
    let min_eig = verify_witness(&lmis.problem, &res.x)?;
    if min_eig < 0.0 {
        return Err(Error::NumericalBreakdown(format!(
            "solver returned a witness with eigenvalue {min_eig:e}"
        )));
    }
    let vars = LmiVariables::unflatten(&lmis.layout, &res.x)?;
    let env = envelope(sys, &vars, params)?;
    let margin = lmis
        .problem
        .constraints
        .iter()
        .map(|c| c.margin)
        .fold(0.0, f64::max);
    Ok(CheckOutcome {
        status: res.status,
        certificate: Some(StabilityCertificate {
            params: *params,
            witness: res.x,
            min_eigenvalue: min_eig,
            margin,
            envelope: env,
            newton_steps: res.newton_steps,
        }),
        newton_steps: res.newton_steps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    DecayRate,
    Delay,
}

/// One solver call made during a search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub value: f64,
    pub xi: f64,
    pub certified: bool,
    pub status: FeasibilityStatus,
    pub newton_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub quantity: Quantity,
    /// Largest certified value, if any point was certified.
    pub best: Option<f64>,
    /// `ξ` at the best point.
    pub xi: Option<f64>,
    /// Smallest probe above `best` that was not certified for the same `ξ`.
    pub upper_probe: Option<f64>,
    pub certificate: Option<StabilityCertificate>,
    pub log: Vec<Probe>,
}

impl SearchResult {
    pub fn newton_steps(&self) -> usize {
        self.log.iter().map(|p| p.newton_steps).sum()
    }

    pub fn best_or_err(&self) -> Result<f64> {
        self.best.ok_or(Error::NoCertifiedPoint)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSettings {
    pub tol: f64,
    pub xi_fractions: Vec<f64>,
    pub formulation: Formulation,
    pub max_bisections: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            tol: DEFAULT_TOLERANCE,
            xi_fractions: DEFAULT_XI_FRACTIONS.to_vec(),
            formulation: Formulation::Sound,
            max_bisections: MAX_BISECTIONS,
        }
    }
}

impl SearchSettings {
    fn validate(&self, lo: f64, hi: f64) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::OutOfRange(format!(
                "tolerance {} must be positive",
                self.tol
            )));
        }
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::OutOfRange(format!("bad range [{lo}, {hi}]")));
        }
        if self.xi_fractions.is_empty() || self.xi_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0))
        {
            return Err(Error::OutOfRange(
                "split fractions must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Bisection on a monotone (decreasing) certification oracle, one `ξ` at a
/// time. After the first split point, later ones only refine above the
/// current best.
fn bisect<F>(
    quantity: Quantity,
    lo: f64,
    hi: f64,
    settings: &SearchSettings,
    oracle: F,
) -> Result<SearchResult>
where
    F: Fn(f64, f64) -> Result<(CheckOutcome, f64)>,
{
    let mut log = vec![];
    let mut best: Option<(f64, f64, StabilityCertificate, Option<f64>)> = None;
    let probe = |v: f64, frac: f64, log: &mut Vec<Probe>| -> Result<Option<StabilityCertificate>> {
        let (out, xi) = oracle(v, frac)?;
        log.push(Probe {
            value: v,
            xi,
            certified: out.certified(),
            status: out.status,
            newton_steps: out.newton_steps,
        });
        Ok(out.certificate)
    };
    for &frac in &settings.xi_fractions {
        let start = match &best {
            Some((b, ..)) => (b + settings.tol).min(hi),
            None => lo,
        };
        if best.as_ref().is_some_and(|(b, ..)| start <= *b) {
            continue;
        }
        let Some(cert) = probe(start, frac, &mut log)? else {
            continue;
        };
        let mut good = (start, cert);
        let mut upper = None;
        if start < hi {
            match probe(hi, frac, &mut log)? {
                Some(c) => good = (hi, c),
                None => {
                    let mut bad = hi;
                    let mut it = 0;
                    while bad - good.0 > settings.tol && it < settings.max_bisections {
                        let mid = 0.5 * (good.0 + bad);
                        match probe(mid, frac, &mut log)? {
                            Some(c) => good = (mid, c),
                            None => bad = mid,
                        }
                        it += 1;
                    }
                    upper = Some(bad);
                }
            }
        }
        let xi = good.1.params.xi;
        best = Some((good.0, xi, good.1, upper));
    }
    Ok(match best {
        Some((v, xi, cert, upper)) => SearchResult {
            quantity,
            best: Some(v),
            xi: Some(xi),
            upper_probe: upper,
            certificate: Some(cert),
            log,
        },
        None => SearchResult {
            quantity,
            best: None,
            xi: None,
            upper_probe: None,
            certificate: None,
            log,
        },
    })
}

/// Largest certified `k` in `[k_lo, k_hi]` for fixed delay bounds.
pub fn max_decay_rate(
    sys: &DelayedNNSystem,
    bounds: DelayBounds,
    k_range: (f64, f64),
    settings: &SearchSettings,
    solver: &dyn FeasibilitySolver,
) -> Result<SearchResult> {
    settings.validate(k_range.0, k_range.1)?;
    if !(k_range.1 < sys.min_k0()) || !(k_range.0 > 0.0) {
        return Err(Error::OutOfRange(format!(
            "k range must lie in (0, min K0 = {})",
            sys.min_k0()
        )));
    }
    bisect(
        Quantity::DecayRate,
        k_range.0,
        k_range.1,
        settings,
        |k, frac| {
            let p = TheoremParams {
                h: bounds.h,
                mu: bounds.mu,
                k,
                xi: frac * bounds.h,
                formulation: settings.formulation,
            };
            Ok((check_stability(sys, &p, solver)?, p.xi))
        },
    )
}

/// Largest certified `h` in `[h_lo, h_hi]` for fixed `μ` and `k`.
pub fn max_delay(
    sys: &DelayedNNSystem,
    mu: f64,
    k: f64,
    h_range: (f64, f64),
    settings: &SearchSettings,
    solver: &dyn FeasibilitySolver,
) -> Result<SearchResult> {
    settings.validate(h_range.0, h_range.1)?;
    if !(h_range.0 > 0.0) {
        return Err(Error::OutOfRange("h range must be positive".into()));
    }
    bisect(
        Quantity::Delay,
        h_range.0,
        h_range.1,
        settings,
        |h, frac| {
            let p = TheoremParams {
                h,
                mu,
                k,
                xi: frac * h,
                formulation: settings.formulation,
            };
            Ok((check_stability(sys, &p, solver)?, p.xi))
        },
    )
}

/// One table cell for CSV output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub quantity: Quantity,
    pub mu: f64,
    /// `h` for decay-rate searches, `k` for delay searches.
    pub fixed: f64,
    pub best: Option<f64>,
    pub xi: Option<f64>,
    /// Smallest normalized eigenvalue of the certified LMIs.
    pub margin: Option<f64>,
    pub upper_probe: Option<f64>,
    pub probes: usize,
    pub newton_steps: usize,
}

impl SearchRow {
    pub fn new(result: &SearchResult, mu: f64, fixed: f64) -> Self {
        SearchRow {
            quantity: result.quantity,
            mu,
            fixed,
            best: result.best,
            xi: result.xi,
            margin: result.certificate.as_ref().map(|c| c.min_eigenvalue),
            upper_probe: result.upper_probe,
            probes: result.log.len(),
            newton_steps: result.newton_steps(),
        }
    }
}

pub fn write_search_csv<W: Write>(rows: &[SearchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{BarrierSolver, FeasibilityResult};
    use nalgebra::DMatrix;

    fn example1() -> DelayedNNSystem {
        DelayedNNSystem::new(
            vec![2.0, 3.5],
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.5, -1.0]),
            DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, 0.5]),
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn certified_point_and_envelope() {
        let sys = example1();
        let p = TheoremParams::new(1.0, 0.8, 0.5, 0.5);
        let out = check_stability(&sys, &p, &BarrierSolver::default()).unwrap();
        let cert = out.certificate.unwrap();
        assert!(cert.min_eigenvalue >= 0.0);
        assert!(cert.reverify(&sys).unwrap() >= 0.0);
        assert!(cert.envelope.e >= cert.envelope.e_with_lambda_max);
        assert!(cert.envelope.e >= 1.0);
    }

    #[test]
    fn k_at_or_above_min_k0_is_rejected() {
        let sys = example1();
        let p = TheoremParams::new(1.0, 0.8, 2.0, 0.5);
        assert!(matches!(
            check_stability(&sys, &p, &BarrierSolver::default()),
            Err(Error::OutOfRange(_))
        ));
    }

    /// Certifies exactly the parameter points with `k ≤ 0.37`.
    struct Threshold;

    impl FeasibilitySolver for Threshold {
        fn solve(&self, problem: &crate::lmi::LmiProblem) -> Result<FeasibilityResult> {
            let meta = problem.metadata.as_ref().unwrap();
            if meta.k <= 0.37 {
                BarrierSolver::default().solve(problem)
            } else {
                Ok(FeasibilityResult {
                    status: FeasibilityStatus::Infeasible,
                    x: vec![0.0; problem.num_vars],
                    t: 1.0,
                    t_lower: 1.0,
                    newton_steps: 1,
                    min_eigenvalue: -1.0,
                })
            }
        }
    }

    #[test]
    fn bisection_brackets_the_threshold() {
        let sys = example1();
        let settings = SearchSettings {
            tol: 0.01,
            xi_fractions: vec![0.5],
            ..Default::default()
        };
        let bounds = DelayBounds { h: 1.0, mu: 0.8 };
        let r = max_decay_rate(&sys, bounds, (0.1, 0.9), &settings, &Threshold).unwrap();
        let best = r.best.unwrap();
        let upper = r.upper_probe.unwrap();
        assert!(best <= 0.37 && upper > 0.37);
        assert!(upper - best <= 0.01);
        assert!(r.certificate.unwrap().params.k == best);
    }

    #[test]
    fn degenerate_range_reports_single_point() {
        let sys = example1();
        let settings = SearchSettings {
            xi_fractions: vec![0.5],
            ..Default::default()
        };
        let bounds = DelayBounds { h: 1.0, mu: 0.8 };
        let r = max_decay_rate(&sys, bounds, (0.1, 0.1), &settings, &Threshold).unwrap();
        assert_eq!(r.best, Some(0.1));
        assert_eq!(r.log.len(), 1);
        let r = max_decay_rate(&sys, bounds, (0.5, 0.5), &settings, &Threshold).unwrap();
        assert_eq!(r.best, None);
        assert!(matches!(r.best_or_err(), Err(Error::NoCertifiedPoint)));
    }

    #[test]
    fn csv_rows() {
        let r = SearchResult {
            quantity: Quantity::Delay,
            best: Some(3.5),
            xi: Some(1.75),
            upper_probe: None,
            certificate: None,
            log: vec![],
        };
        let mut buf = vec![];
        write_search_csv(&[SearchRow::new(&r, 0.5, 1e-3)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "quantity,mu,fixed,best,xi,margin,upper_probe,probes,newton_steps"
        );
        assert!(text.contains("delay,0.5,0.001,3.5,1.75,,,0,0"));
    }
}
