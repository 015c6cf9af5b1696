//! Vector-valued test functions with exact derivatives and antiderivatives.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// A scalar function closed under differentiation and integration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScalarFn {
    /// Coefficients in ascending powers.
    Polynomial(Vec<f64>),
    /// `amplitude · sin(frequency·v + phase)`.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// `p(v)·e^{rate·v}` with `p` in ascending powers.
    ExpPolynomial {
        coeffs: Vec<f64>,
        rate: f64,
    },
    Sum(Vec<ScalarFn>),
}

fn poly_eval(c: &[f64], v: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * v + a)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, a)| i as f64 * a)
        .collect()
}

impl ScalarFn {
    pub fn constant(c: f64) -> Self {
        ScalarFn::Polynomial(vec![c])
    }

    pub fn eval(&self, v: f64) -> f64 {
        match self {
            ScalarFn::Polynomial(c) => poly_eval(c, v),
            ScalarFn::ExpPolynomial { coeffs, rate } => poly_eval(coeffs, v) * (rate * v).exp(),
            ScalarFn::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * v + phase).sin(),
            ScalarFn::Sum(parts) => parts.iter().map(|p| p.eval(v)).sum(),
        }
    }

    pub fn derivative(&self) -> ScalarFn {
        match self {
            ScalarFn::Polynomial(c) => ScalarFn::Polynomial(poly_derivative(c)),
            ScalarFn::ExpPolynomial { coeffs, rate } => {
                let mut d = poly_derivative(coeffs);
                d.resize(coeffs.len(), 0.0);
                for (di, a) in d.iter_mut().zip(coeffs) {
                    *di += rate * a;
                }
                ScalarFn::ExpPolynomial {
                    coeffs: d,
                    rate: *rate,
                }
            }
            ScalarFn::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => ScalarFn::Sinusoid {
                amplitude: amplitude * frequency,
                frequency: *frequency,
                phase: phase + std::f64::consts::FRAC_PI_2,
            },
            ScalarFn::Sum(parts) => ScalarFn::Sum(parts.iter().map(|p| p.derivative()).collect()),
        }
    }

    /// An antiderivative (integration constant zero for polynomials).
    pub fn antiderivative(&self) -> ScalarFn {
        match self {
            ScalarFn::Polynomial(c) => {
                let mut out = vec![0.0];
                out.extend(c.iter().enumerate().map(|(i, a)| a / (i + 1) as f64));
                ScalarFn::Polynomial(out)
            }
            ScalarFn::ExpPolynomial { coeffs, rate } => {
                if *rate == 0.0 {
                    return ScalarFn::Polynomial(coeffs.clone()).antiderivative();
                }
                // q = Σ_j (-1)^j p^{(j)} / rate^{j+1} solves q' + rate·q = p
                let mut q = vec![0.0; coeffs.len()];
                let mut p = coeffs.clone();
                let mut factor = 1.0 / rate;
                while !p.is_empty() {
                    for (qi, a) in q.iter_mut().zip(&p) {
                        *qi += factor * a;
                    }
                    factor *= -1.0 / rate;
                    p = poly_derivative(&p);
                }
                ScalarFn::ExpPolynomial {
                    coeffs: q,
                    rate: *rate,
                }
            }
            ScalarFn::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                if *frequency == 0.0 {
                    ScalarFn::Polynomial(vec![0.0, amplitude * phase.sin()])
                } else {
                    ScalarFn::Sinusoid {
                        amplitude: amplitude / frequency,
                        frequency: *frequency,
                        phase: phase - std::f64::consts::FRAC_PI_2,
                    }
                }
            }
            ScalarFn::Sum(parts) => {
                ScalarFn::Sum(parts.iter().map(|p| p.antiderivative()).collect())
            }
        }
    }
}

/// `x(v) = [f_1(v), …, f_n(v)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub components: Vec<ScalarFn>,
}

impl TestFunction {
    pub fn new(components: Vec<ScalarFn>) -> Self {
        TestFunction { components }
    }

    /// `f(v)·e` with `e` fixed.
    pub fn scaled(f: ScalarFn, direction: &[f64]) -> Self {
        TestFunction {
            components: direction.iter().map(|d| f.scale(*d)).collect(),
        }
    }

    pub fn zero(n: usize) -> Self {
        TestFunction {
            components: vec![ScalarFn::constant(0.0); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, v: f64) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|f| f.eval(v)))
    }

    pub fn eval_into(&self, v: f64, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.components) {
            *o = f.eval(v);
        }
    }

    pub fn derivative(&self) -> TestFunction {
        TestFunction::new(self.components.iter().map(|f| f.derivative()).collect())
    }

    pub fn antiderivative(&self) -> TestFunction {
        TestFunction::new(self.components.iter().map(|f| f.antiderivative()).collect())
    }
}

impl ScalarFn {
    pub fn scale(&self, s: f64) -> ScalarFn {
        match self {
            ScalarFn::Polynomial(c) => ScalarFn::Polynomial(c.iter().map(|a| a * s).collect()),
            ScalarFn::ExpPolynomial { coeffs, rate } => ScalarFn::ExpPolynomial {
                coeffs: coeffs.iter().map(|a| a * s).collect(),
                rate: *rate,
            },
            ScalarFn::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => ScalarFn::Sinusoid {
                amplitude: amplitude * s,
                frequency: *frequency,
                phase: *phase,
            },
            ScalarFn::Sum(parts) => ScalarFn::Sum(parts.iter().map(|p| p.scale(s)).collect()),
        }
    }

    /// True when the derivative vanishes identically.
    pub fn is_constant(&self) -> bool {
        match self {
            ScalarFn::Polynomial(c) => c.iter().skip(1).all(|a| *a == 0.0),
            ScalarFn::ExpPolynomial { coeffs, .. } => coeffs.iter().all(|a| *a == 0.0),
            ScalarFn::Sinusoid {
                amplitude,
                frequency,
                ..
            } => *amplitude == 0.0 || *frequency == 0.0,
            ScalarFn::Sum(parts) => parts.iter().all(ScalarFn::is_constant),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ScalarFn {
        ScalarFn::Sum(vec![
            ScalarFn::Polynomial(vec![1.0, -2.0, 0.5, 3.0]),
            ScalarFn::Sinusoid {
                amplitude: 1.5,
                frequency: 4.0,
                phase: 0.3,
            },
            ScalarFn::ExpPolynomial {
                coeffs: vec![0.5, 0.0, -1.0],
                rate: -1.3,
            },
        ])
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let f = sample();
        let d = f.derivative();
        for &v in &[-1.0, 0.2, 1.7] {
            let h = 1e-6;
            let fd = (f.eval(v + h) - f.eval(v - h)) / (2.0 * h);
            assert!((fd - d.eval(v)).abs() < 1e-6);
        }
    }

    #[test]
    fn antiderivative_inverts_derivative() {
        let f = sample();
        let back = f.antiderivative().derivative();
        for &v in &[-2.0, 0.0, 0.9] {
            assert!((back.eval(v) - f.eval(v)).abs() < 1e-12);
        }
        let flat = ScalarFn::Sinusoid {
            amplitude: 2.0,
            frequency: 0.0,
            phase: 0.5,
        };
        assert!((flat.antiderivative().eval(3.0) - 6.0 * 0.5f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn scaled_direction() {
        let x = TestFunction::scaled(ScalarFn::Polynomial(vec![0.0, 1.0]), &[2.0, -1.0]);
        let v = x.eval(3.0);
        assert_eq!(v.as_slice(), &[6.0, -3.0]);
    }
}
