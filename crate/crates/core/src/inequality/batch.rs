//! Seeded random batches over every inequality family.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    verify_corollary_forms, verify_rci, verify_wrci, weighted_terms, InequalityReport, ScalarFn,
    TestFunction,
};
use crate::basis::WeightedBasis;
use crate::error::{Error, Result};
use crate::linalg::{inverse_sqrt, max_eigenvalue};
use crate::parallel::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Weighted bound with `g0..g2`.
    Quadratic,
    /// Weighted bound with `g0..g3`.
    Cubic,
    /// Bound on `ẋ` through endpoint values and iterated integrals.
    Derivative,
    /// Reciprocally convex combination.
    ReciprocalConvex,
    /// Weighted reciprocally convex combination.
    WeightedReciprocalConvex,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Quadratic,
        Family::Cubic,
        Family::Derivative,
        Family::ReciprocalConvex,
        Family::WeightedReciprocalConvex,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Family::Quadratic => "weighted-quadratic",
            Family::Cubic => "weighted-cubic",
            Family::Derivative => "derivative-form",
            Family::ReciprocalConvex => "reciprocal-convex",
            Family::WeightedReciprocalConvex => "weighted-reciprocal-convex",
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub lemma: String,
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub passed: bool,
    /// For the cubic family: the quadratic bound on the same inputs.
    pub rhs_lower: Option<f64>,
}

impl BatchRecord {
    fn from_report(family: Family, seed: u64, rep: &InequalityReport, passed: bool) -> Self {
        BatchRecord {
            lemma: family.label().to_string(),
            seed,
            lhs: rep.lhs,
            rhs: rep.rhs,
            slack: rep.slack,
            passed,
            rhs_lower: None,
        }
    }
}

fn random_scalar(rng: &mut ChaCha8Rng) -> ScalarFn {
    let poly = |rng: &mut ChaCha8Rng| {
        let deg = rng.gen_range(0..=6);
        ScalarFn::Polynomial((0..=deg).map(|_| rng.gen_range(-2.0..=2.0)).collect())
    };
    let sine = |rng: &mut ChaCha8Rng| ScalarFn::Sinusoid {
        amplitude: rng.gen_range(-2.0..=2.0),
        frequency: rng.gen_range(0.0..=8.0),
        phase: rng.gen_range(0.0..std::f64::consts::TAU),
    };
    match rng.gen_range(0..3) {
        0 => poly(rng),
        1 => sine(rng),
        _ => ScalarFn::Sum(vec![poly(rng), sine(rng)]),
    }
}

fn random_function(rng: &mut ChaCha8Rng, n: usize) -> TestFunction {
    TestFunction::new((0..n).map(|_| random_scalar(rng)).collect())
}

/// `AᵀA + 1e-6·I` with `A` uniform in `[-1, 1]`.
pub fn random_gamma(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..=1.0));
    a.transpose() * &a + DMatrix::identity(n, n) * 1e-6
}

/// A coupling `S` with `[[Γ,S],[Sᵀ,Γ]] ⪰ 0`: a uniform draw shrunk until
/// `‖Γ^{-1/2} S Γ^{-1/2}‖₂ ≤ 1`.
pub fn random_coupling(rng: &mut ChaCha8Rng, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = gamma.nrows();
    let s = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..=1.0));
    let root = inverse_sqrt(gamma)?;
    let m = &root * &s * &root;
    let sigma = max_eigenvalue(&(m.transpose() * &m))?.max(0.0).sqrt();
    Ok(if sigma > 1.0 {
        s * ((1.0 - 1e-9) / sigma)
    } else {
        s
    })
}

fn random_interval(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let c1 = rng.gen_range(-3.0..=1.0);
    let c2 = c1 + rng.gen_range(0.1..=3.0);
    let delta = match rng.gen_range(0..8) {
        0 => 0.0,
        1 => 1e-8,
        _ => rng.gen_range(0.0..=5.0),
    };
    (c1, c2, delta)
}

fn weighted_case(seed: u64) -> Result<(TestFunction, WeightedBasis, DMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=3);
    let (c1, c2, delta) = random_interval(&mut rng);
    let basis = WeightedBasis::new(c1, c2, delta)?;
    let f = if rng.gen_bool(0.25) {
        // inside the span of g_k·e^{-δ(v-c2)}: the cubic bound is tight
        let co = basis.coefficients;
        let lift = (delta * c2).exp();
        let comps = (0..n)
            .map(|_| {
                let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..=2.0)).collect();
                let coeffs = [
                    a[0] + a[1] * co.kbar + a[2] * co.m + a[3] * co.r,
                    a[1] + a[2] * co.c + a[3] * co.q,
                    a[2] + a[3] * co.hbar,
                    a[3],
                ];
                ScalarFn::ExpPolynomial {
                    coeffs: coeffs.iter().map(|c| c * lift).collect(),
                    rate: -delta,
                }
            })
            .collect();
        TestFunction::new(comps)
    } else {
        random_function(&mut rng, n)
    };
    let gamma = random_gamma(&mut rng, n);
    Ok((f, basis, gamma))
}

fn run_case(family: Family, seed: u64) -> Result<BatchRecord> {
    match family {
        Family::Quadratic | Family::Cubic => {
            let (f, basis, gamma) = weighted_case(seed)?;
            let (lhs, terms) = weighted_terms(&f, &basis, &gamma, 3)?;
            let quadratic: f64 = terms[..3].iter().sum();
            if family == Family::Quadratic {
                let rep = InequalityReport::new(lhs, quadratic);
                Ok(BatchRecord::from_report(family, seed, &rep, rep.passed))
            } else {
                let rep = InequalityReport::new(lhs, quadratic + terms[3]);
                let mut rec = BatchRecord::from_report(family, seed, &rep, rep.passed);
                rec.rhs_lower = Some(quadratic);
                Ok(rec)
            }
        }
        Family::Derivative => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=3);
            let (c1, c2, delta) = random_interval(&mut rng);
            let basis = WeightedBasis::new(c1, c2, delta)?;
            let x = random_function(&mut rng, n);
            let gamma = random_gamma(&mut rng, n);
            let rep = verify_corollary_forms(&x, &basis, &gamma)?;
            Ok(BatchRecord::from_report(
                family,
                seed,
                &rep.inequality,
                rep.passed(),
            ))
        }
        Family::ReciprocalConvex => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=4);
            let gamma = random_gamma(&mut rng, n);
            let s = random_coupling(&mut rng, &gamma)?;
            let w1 = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..=2.0));
            let w2 = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..=2.0));
            let sigma = rng.gen_range(1e-6..=1.0 - 1e-6);
            let rep = verify_rci(&w1, &w2, &gamma, &s, sigma)?;
            Ok(BatchRecord::from_report(family, seed, &rep, rep.passed))
        }
        Family::WeightedReciprocalConvex => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=3);
            let r = random_function(&mut rng, n);
            let theta1 = rng.gen_range(0.0..=1.0);
            let theta2 = theta1 + rng.gen_range(0.1..=3.0);
            let theta = match rng.gen_range(0..10) {
                0 => theta1,
                1 => theta2,
                _ => rng.gen_range(theta1..=theta2),
            };
            let delta = rng.gen_range(0.0..=3.0);
            let t = rng.gen_range(-1.0..=1.0);
            let gamma = random_gamma(&mut rng, n);
            let s = random_coupling(&mut rng, &gamma)?;
            let rep = verify_wrci(&r, theta1, theta2, theta, delta, &gamma, &s, t)?;
            Ok(BatchRecord::from_report(
                family,
                seed,
                &rep.inequality,
                rep.passed(),
            ))
        }
    }
}

/// Runs `cases` seeded samples (`seed = base_seed + i`). Records come back
/// in seed order regardless of `exec`.
pub fn run_batch(
    family: Family,
    cases: usize,
    base_seed: u64,
    exec: Execution,
) -> Result<Vec<BatchRecord>> {
    exec.try_map(cases, |i| {
        run_case(family, base_seed.wrapping_add(i as u64))
    })
}

pub fn write_csv<W: Write>(records: &[BatchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;

    #[test]
    fn coupling_keeps_block_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let g = random_gamma(&mut rng, 3);
            let s = random_coupling(&mut rng, &g).unwrap();
            let mut b = DMatrix::zeros(6, 6);
            b.view_mut((0, 0), (3, 3)).copy_from(&g);
            b.view_mut((3, 3), (3, 3)).copy_from(&g);
            b.view_mut((0, 3), (3, 3)).copy_from(&s);
            b.view_mut((3, 0), (3, 3)).copy_from(&s.transpose());
            assert!(min_eigenvalue(&b).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn small_batches_pass_and_are_mode_independent() {
        for fam in Family::ALL {
            let seq = run_batch(fam, 25, 100, Execution::Sequential).unwrap();
            let par = run_batch(fam, 25, 100, Execution::Parallel).unwrap();
            assert_eq!(seq, par);
            assert!(seq.iter().all(|r| r.passed), "{fam:?}");
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let recs = run_batch(Family::ReciprocalConvex, 2, 0, Execution::Sequential).unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lemma,seed,lhs,rhs,slack,passed,rhs_lower\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
