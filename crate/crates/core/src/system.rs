//! Delayed neural-network model
//!
//! ```text
//! ż(t) = -K0 z(t) + K1 f(z(t)) + K2 f(z(t - h(t))) + ε
//! ```
//!
//! and its shift `r = z - z*` to the origin, where the activations become
//! `g(r) = f(r + z*) - f(z*)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar activation shape; the slope `L_j` is applied on top.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// `L·tanh(x)`
    #[default]
    ScaledTanh,
    /// `L·x`
    Linear,
    /// `L·clamp(x, -1, 1)`
    Saturation,
}

impl Activation {
    fn base(self, x: f64) -> f64 {
        match self {
            Activation::ScaledTanh => x.tanh(),
            Activation::Linear => x,
            Activation::Saturation => x.clamp(-1.0, 1.0),
        }
    }

    fn base_slope(self, x: f64) -> f64 {
        match self {
            Activation::ScaledTanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Linear => 1.0,
            Activation::Saturation => {
                if x.abs() < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫_0^x base(u) du`
    fn base_integral(self, x: f64) -> f64 {
        match self {
            Activation::ScaledTanh => {
                // log cosh without overflow
                let a = x.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            }
            Activation::Linear => 0.5 * x * x,
            Activation::Saturation => {
                if x.abs() <= 1.0 {
                    0.5 * x * x
                } else {
                    x.abs() - 0.5
                }
            }
        }
    }

    pub fn eval(self, slope: f64, x: f64) -> f64 {
        slope * self.base(x)
    }

    pub fn derivative(self, slope: f64, x: f64) -> f64 {
        slope * self.base_slope(x)
    }

    pub fn integral(self, slope: f64, x: f64) -> f64 {
        slope * self.base_integral(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayedNNSystem {
    /// Diagonal of `K0`.
    pub k0: Vec<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    /// Sector slopes `L_j`.
    pub sector: Vec<f64>,
    pub activation: Vec<Activation>,
    /// Constant input `ε` of the unshifted model.
    pub input: Vec<f64>,
    /// Equilibrium `z*` the model is shifted by (zero until shifted).
    pub offset: Vec<f64>,
}

impl DelayedNNSystem {
    /// Zero input, tanh activations, no shift.
    pub fn new(k0: Vec<f64>, k1: DMatrix<f64>, k2: DMatrix<f64>, sector: Vec<f64>) -> Result<Self> {
        let n = k0.len();
        let sys = DelayedNNSystem {
            k0,
            k1,
            k2,
            sector,
            activation: vec![Activation::ScaledTanh; n],
            input: vec![0.0; n],
            offset: vec![0.0; n],
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn dim(&self) -> usize {
        self.k0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.k0.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("system has no states".into()));
        }
        let shape_ok = |m: &DMatrix<f64>| m.nrows() == n && m.ncols() == n;
        if !shape_ok(&self.k1) || !shape_ok(&self.k2) {
            return Err(Error::DimensionMismatch(format!(
                "K1 and K2 must be {n}x{n}"
            )));
        }
        for (name, len) in [
            ("sector", self.sector.len()),
            ("activation", self.activation.len()),
            ("input", self.input.len()),
            ("offset", self.offset.len()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has length {len}, expected {n}"
                )));
            }
        }
        if let Some(k) = self.k0.iter().find(|k| !(**k > 0.0) || !k.is_finite()) {
            return Err(Error::Precondition(format!(
                "K0 entries must be positive, found {k}"
            )));
        }
        if let Some(l) = self.sector.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(Error::Precondition(format!(
                "sector slopes must be non-negative, found {l}"
            )));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&self.k1) || !finite(&self.k2) {
            return Err(Error::Precondition("K1, K2 must be finite".into()));
        }
        Ok(())
    }

    pub fn k0_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.k0))
    }

    pub fn sector_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.sector))
    }

    pub fn min_k0(&self) -> f64 {
        self.k0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Unshifted activation `f(z)`.
    pub fn f(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            z.len(),
            z.iter()
                .enumerate()
                .map(|(j, x)| self.activation[j].eval(self.sector[j], *x)),
        )
    }

    /// Shifted activation `g(r) = f(r + z*) - f(z*)`.
    pub fn g(&self, r: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            r.len(),
            r.iter().enumerate().map(|(j, x)| {
                let (a, l, z) = (self.activation[j], self.sector[j], self.offset[j]);
                a.eval(l, x + z) - a.eval(l, z)
            }),
        )
    }

    /// `∫_0^{r_j} g_j(s) ds` for each coordinate.
    pub fn g_integral(&self, r: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            r.len(),
            r.iter().enumerate().map(|(j, x)| {
                let (a, l, z) = (self.activation[j], self.sector[j], self.offset[j]);
                a.integral(l, x + z) - a.integral(l, z) - a.eval(l, z) * x
            }),
        )
    }

    /// Right side of the shifted model.
    pub fn rhs(&self, r: &DVector<f64>, r_delayed: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.k1 * self.g(r) + &self.k2 * self.g(r_delayed);
        for j in 0..r.len() {
            out[j] -= self.k0[j] * r[j];
        }
        out
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let fz = self.f(z);
        let mut res = -(&self.k1 + &self.k2) * fz;
        for j in 0..z.len() {
            res[j] += self.k0[j] * z[j] - self.input[j];
        }
        res
    }

    /// Solves `K0 z = (K1 + K2) f(z) + ε` by damped Newton, falling back
    /// to the fixed-point map `z ← K0⁻¹((K1+K2)f(z) + ε)` when a Newton
    /// step cannot reduce the residual.
    pub fn find_equilibrium(&self) -> Result<DVector<f64>> {
        self.validate()?;
        let n = self.dim();
        let k12 = &self.k1 + &self.k2;
        let mut z = DVector::zeros(n);
        let mut res = self.residual(&z);
        let max_iter = 500;
        for _ in 0..max_iter {
            let norm = res.norm();
            if norm <= 1e-10 {
                return Ok(z);
            }
            let slopes = DMatrix::from_diagonal(&DVector::from_iterator(
                n,
                (0..n).map(|j| self.activation[j].derivative(self.sector[j], z[j])),
            ));
            let jac = self.k0_matrix() - &k12 * slopes;
            let mut accepted = false;
            if let Some(step) = jac.lu().solve(&res) {
                let mut alpha = 1.0;
                while alpha > 1e-6 {
                    let cand = &z - &step * alpha;
                    let cres = self.residual(&cand);
                    if cres.norm() < (1.0 - 1e-4 * alpha) * norm {
                        z = cand;
                        res = cres;
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
            }
            if !accepted {
                let fz = self.f(&z);
                let target = &k12 * fz;
                z = DVector::from_iterator(
                    n,
                    (0..n).map(|j| (target[j] + self.input[j]) / self.k0[j]),
                );
                res = self.residual(&z);
            }
        }
        let residual = res.norm();
        if residual <= 1e-10 {
            Ok(z)
        } else {
            Err(Error::NonConvergence {
                iterations: max_iter,
                residual,
            })
        }
    }

    /// The model shifted to its equilibrium.
    pub fn shifted(&self) -> Result<DelayedNNSystem> {
        let z = self.find_equilibrium()?;
        let mut out = self.clone();
        out.offset = z.iter().copied().collect();
        Ok(out)
    }

    /// Largest violation of `0 ≤ g_j(x)/x ≤ L_j` over the given points.
    pub fn sector_violation(&self, r: &DVector<f64>) -> f64 {
        let g = self.g(r);
        let mut worst = 0.0_f64;
        for j in 0..r.len() {
            let (x, y) = (r[j], g[j]);
            // 0 ≤ x·y ≤ L x²
            let lower = -(x * y);
            let upper = x * y - self.sector[j] * x * x;
            worst = worst.max(lower).max(upper);
        }
        worst
    }
}

/// Two-neuron benchmark network with unit sector slopes.
pub fn example1() -> DelayedNNSystem {
    DelayedNNSystem::new(
        vec![2.0, 3.5],
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.5, -1.0]),
        DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, 0.5]),
        vec![1.0, 1.0],
    )
    .expect("preset is valid")
}

/// Four-neuron benchmark network.
pub fn example2() -> DelayedNNSystem {
    #[rustfmt::skip]
    let k1 = [
        -0.0373, 0.4852, -0.3351, 0.2336,
        -1.6033, 0.5988, -0.3224, 1.2352,
        0.3394, -0.0860, -0.3824, -0.5785,
        -0.1311, 0.3253, -0.9534, -0.5015,
    ];
    #[rustfmt::skip]
    let k2 = [
        0.8674, -1.2405, -0.5325, -0.0220,
        0.0474, -0.9164, 0.0360, 0.9816,
        1.8495, 2.6117, -0.3788, 0.0824,
        -2.0413, 0.5179, 1.1734, -0.2775,
    ];
    DelayedNNSystem::new(
        vec![1.2769, 0.6231, 0.9230, 0.4480],
        DMatrix::from_row_slice(4, 4, &k1),
        DMatrix::from_row_slice(4, 4, &k2),
        vec![0.1137, 0.1279, 0.7994, 0.2368],
    )
    .expect("preset is valid")
}
