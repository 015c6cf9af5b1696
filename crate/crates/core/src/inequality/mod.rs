//! Numerical checks of the weighted integral inequalities, the derivative
//! (integration-by-parts) forms, and the two reciprocally convex bounds.
//!
//! Every check returns an [`InequalityReport`]; passing means
//! `lhs - rhs ≥ -tolerance` with `tolerance = 1e-8·max(1, |lhs|)` unless a
//! caller picks another one.

mod batch;
mod function;

pub use batch::{run_batch, write_csv, BatchRecord, Family};
pub use function::{ScalarFn, TestFunction};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::WeightedBasis;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, quad_form};
use crate::quadrature::Quadrature;

pub const RELATIVE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl InequalityReport {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        Self::with_tolerance(lhs, rhs, RELATIVE_TOLERANCE * lhs.abs().max(1.0))
    }

    pub fn with_tolerance(lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = lhs - rhs;
        InequalityReport {
            lhs,
            rhs,
            slack,
            tolerance,
            passed: slack >= -tolerance,
        }
    }
}

fn check_gamma(gamma: &DMatrix<f64>, n: usize) -> Result<()> {
    if gamma.nrows() != n || gamma.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Γ is {}x{}, function has {n} components",
            gamma.nrows(),
            gamma.ncols()
        )));
    }
    let lam = min_eigenvalue(gamma)?;
    if lam < 1e-9 {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: lam,
        });
    }
    Ok(())
}

fn coupled_block(gamma: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = gamma.nrows();
    if gamma.ncols() != n || s.nrows() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch("Γ and S must be n×n".into()));
    }
    let mut b = DMatrix::zeros(2 * n, 2 * n);
    b.view_mut((0, 0), (n, n)).copy_from(gamma);
    b.view_mut((n, n), (n, n)).copy_from(gamma);
    b.view_mut((0, n), (n, n)).copy_from(s);
    b.view_mut((n, 0), (n, n)).copy_from(&s.transpose());
    let lam = min_eigenvalue(&b)?;
    if lam < -1e-10 * (1.0 + b.amax()) {
        return Err(Error::BlockNotPsd {
            min_eigenvalue: lam,
        });
    }
    Ok(b)
}

/// Left side and the per-`k` right-side terms `⟨g_k,g_k⟩⁻¹ ‖∫ϱ g_k‖²_Γ`.
pub fn weighted_terms(
    f: &TestFunction,
    basis: &WeightedBasis,
    gamma: &DMatrix<f64>,
    order: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = f.dim();
    check_gamma(gamma, n)?;
    if order > 3 {
        return Err(Error::OutOfRange(format!("order {order} exceeds 3")));
    }
    let dim = 1 + n * (order + 1);
    let v = Quadrature::default().integrate_vec(
        |s, out: &mut [f64]| {
            let mut tmp = vec![0.0; n];
            f.eval_into(s, &mut tmp);
            let x = DVector::from_column_slice(&tmp);
            out[0] = basis.integrand_weight(s) * quad_form(gamma, &x);
            for k in 0..=order {
                let g = basis.g(k, s);
                for i in 0..n {
                    out[1 + k * n + i] = tmp[i] * g;
                }
            }
        },
        dim,
        basis.c1,
        basis.c2,
    )?;
    let w = basis.weights();
    let terms = (0..=order)
        .map(|k| {
            let proj = DVector::from_column_slice(&v[1 + k * n..1 + (k + 1) * n]);
            w[k] * quad_form(gamma, &proj)
        })
        .collect();
    Ok((v[0], terms))
}

/// `∫ e^{δ(v-c2)} ϱᵀΓϱ ≥ Σ_{k≤order} ⟨g_k,g_k⟩⁻¹ (∫ϱg_k)ᵀΓ(∫ϱg_k)`.
pub fn verify_weighted_inequality(
    f: &TestFunction,
    basis: &WeightedBasis,
    gamma: &DMatrix<f64>,
    order: usize,
) -> Result<InequalityReport> {
    let (lhs, terms) = weighted_terms(f, basis, gamma, order)?;
    Ok(InequalityReport::new(lhs, terms.iter().sum()))
}

/// Result of the derivative-form check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeFormReport {
    pub inequality: InequalityReport,
    /// `Ω_0..Ω_3` from endpoint values and iterated integrals.
    pub omegas: Vec<Vec<f64>>,
    /// Largest scaled gap between `Ω_k` and `∫ ẋ g_k` by quadrature.
    pub identity_error: f64,
    pub identity_holds: bool,
}

impl DerivativeFormReport {
    pub fn passed(&self) -> bool {
        self.inequality.passed && self.identity_holds
    }
}

/// `Ω_0..Ω_3` from endpoint values and the exact single, double and
/// triple iterated integrals of `x`.
pub fn omega_terms(x: &TestFunction, basis: &WeightedBasis) -> Vec<DVector<f64>> {
    let (c1, c2) = (basis.c1, basis.c2);
    let l = c2 - c1;
    let co = basis.coefficients;
    let a1 = x.antiderivative();
    let a2 = a1.antiderivative();
    let a3 = a2.antiderivative();
    let x1 = x.eval(c1);
    let x2 = x.eval(c2);
    let i1 = a1.eval(c2) - a1.eval(c1);
    let i2 = a1.eval(c2) * l - (a2.eval(c2) - a2.eval(c1));
    let i3 = a1.eval(c2) * (0.5 * l * l) - a2.eval(c2) * l + (a3.eval(c2) - a3.eval(c1));
    let mut omegas = vec![
        &x2 - &x1,
        &x2 * co.g(1, c2) - &x1 * co.g(1, c1) - &i1,
        &x2 * co.g(2, c2) - &x1 * co.g(2, c1) - &i1 * (co.c + 2.0 * c1) - &i2 * 2.0,
        &x2 * co.g(3, c2)
            - &x1 * co.g(3, c1)
            - &i1 * (3.0 * c1 * c1 + 2.0 * c1 * co.hbar + co.q)
            - &i2 * (2.0 * co.hbar + 6.0 * c1)
            - &i3 * 6.0,
    ];
    for (i, f) in x.components.iter().enumerate() {
        if f.is_constant() {
            omegas.iter_mut().for_each(|o| o[i] = 0.0);
        }
    }
    omegas
}

/// `∫ e^{δ(v-c2)} ẋᵀΓẋ ≥ Σ_k ⟨g_k,g_k⟩⁻¹ Ω_kᵀΓΩ_k`, plus the identity
/// `Ω_k = ∫ ẋ g_k`.
pub fn verify_corollary_forms(
    x: &TestFunction,
    basis: &WeightedBasis,
    gamma: &DMatrix<f64>,
) -> Result<DerivativeFormReport> {
    let n = x.dim();
    let dx = x.derivative();
    let (lhs, _) = weighted_terms(&dx, basis, gamma, 0)?;
    let omegas = omega_terms(x, basis);
    let w = basis.weights();
    let rhs: f64 = (0..4).map(|k| w[k] * quad_form(gamma, &omegas[k])).sum();

    let direct = Quadrature::default().integrate_vec(
        |s, out: &mut [f64]| {
            for k in 0..4 {
                let g = basis.g(k, s);
                for (i, f) in dx.components.iter().enumerate() {
                    out[k * n + i] = f.eval(s) * g;
                }
            }
        },
        4 * n,
        basis.c1,
        basis.c2,
    )?;
    let (x1, x2) = (x.eval(basis.c1), x.eval(basis.c2));
    let mut worst = 0.0_f64;
    for k in 0..4 {
        for i in 0..n {
            let scale = 1.0_f64
                .max(omegas[k][i].abs())
                .max((x2[i] * basis.g(k, basis.c2)).abs())
                .max((x1[i] * basis.g(k, basis.c1)).abs());
            worst = worst.max((omegas[k][i] - direct[k * n + i]).abs() / scale);
        }
    }
    Ok(DerivativeFormReport {
        inequality: InequalityReport::new(lhs, rhs),
        omegas: omegas.iter().map(|o| o.as_slice().to_vec()).collect(),
        identity_error: worst,
        identity_holds: worst <= RELATIVE_TOLERANCE,
    })
}

/// `(1/σ)W1ᵀΓW1 + (1/(1-σ))W2ᵀΓW2 ≥ [W1;W2]ᵀ[[Γ,S],[Sᵀ,Γ]][W1;W2]`.
pub fn verify_rci(
    w1: &DVector<f64>,
    w2: &DVector<f64>,
    gamma: &DMatrix<f64>,
    s: &DMatrix<f64>,
    sigma: f64,
) -> Result<InequalityReport> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::OutOfRange(format!("σ = {sigma} must lie in (0, 1)")));
    }
    let block = coupled_block(gamma, s)?;
    if w1.len() != gamma.nrows() || w2.len() != gamma.nrows() {
        return Err(Error::DimensionMismatch("W1, W2 must have length n".into()));
    }
    let lhs = quad_form(gamma, w1) / sigma + quad_form(gamma, w2) / (1.0 - sigma);
    let stacked = DVector::from_iterator(2 * w1.len(), w1.iter().chain(w2.iter()).copied());
    Ok(InequalityReport::new(lhs, quad_form(&block, &stacked)))
}

/// `δ / (e^{δ·len} - 1)`, continuous at `δ = 0`.
pub fn wrci_prefactor(delta: f64, len: f64) -> f64 {
    if delta == 0.0 {
        1.0 / len
    } else {
        delta / (delta * len).exp_m1()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WrciReport {
    pub inequality: InequalityReport,
    /// The intermediate two-piece bound (each piece by the order-0
    /// weighted inequality on its own subinterval).
    pub split: InequalityReport,
}

impl WrciReport {
    pub fn passed(&self) -> bool {
        self.inequality.passed && self.split.passed
    }
}

/// Weighted reciprocally convex bound on `[t-ϑ2, t-ϑ1]` split at `t-ϑ`.
#[allow(clippy::too_many_arguments)]
pub fn verify_wrci(
    r: &TestFunction,
    theta1: f64,
    theta2: f64,
    theta: f64,
    delta: f64,
    gamma: &DMatrix<f64>,
    s: &DMatrix<f64>,
    t: f64,
) -> Result<WrciReport> {
    if !(theta1 <= theta && theta <= theta2) {
        return Err(Error::OutOfRange(format!(
            "ϑ = {theta} outside [{theta1}, {theta2}]"
        )));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::NegativeDelta(delta));
    }
    let block = coupled_block(gamma, s)?;
    let n = gamma.nrows();
    if r.dim() != n {
        return Err(Error::DimensionMismatch(
            "r and Γ differ in dimension".into(),
        ));
    }
    let dr = r.derivative();
    let lhs = Quadrature::default().integrate_vec_pieces(
        |u, out: &mut [f64]| {
            let d = dr.eval(u);
            out[0] = (delta * (theta1 + u - t)).exp() * quad_form(gamma, &d);
        },
        1,
        &[t - theta2, t - theta, t - theta1],
    )?[0];
    let ups1 = r.eval(t - theta) - r.eval(t - theta2);
    let ups2 = r.eval(t - theta1) - r.eval(t - theta);

    let rhs = if theta2 > theta1 {
        let stacked = DVector::from_iterator(2 * n, ups1.iter().chain(ups2.iter()).copied());
        wrci_prefactor(delta, theta2 - theta1) * quad_form(&block, &stacked)
    } else {
        0.0
    };
    // a vanishing piece contributes its limit, zero
    let piece1 = if theta2 > theta {
        (-delta * (theta - theta1)).exp()
            * wrci_prefactor(delta, theta2 - theta)
            * quad_form(gamma, &ups1)
    } else {
        0.0
    };
    let piece2 = if theta > theta1 {
        wrci_prefactor(delta, theta - theta1) * quad_form(gamma, &ups2)
    } else {
        0.0
    };
    Ok(WrciReport {
        inequality: InequalityReport::new(lhs, rhs),
        split: InequalityReport::new(lhs, piece1 + piece2),
    })
}
