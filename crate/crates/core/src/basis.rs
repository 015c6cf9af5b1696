//! Exponentially weighted power moments and the monic orthogonal
//! polynomials `g0..g3` they generate.
//!
//! Two weights appear. The inequality integrand carries `e^{δ(v-c2)}`;
//! the inner product that makes `g_k` orthogonal carries the reciprocal
//! `e^{-δ(v-c2)}`. With that pairing Cauchy–Schwarz gives
//!
//! ```text
//! ∫ e^{δ(v-c2)} ϱᵀΓϱ dv ≥ Σ_k ⟨g_k,g_k⟩⁻¹ (∫ ϱ g_k dv)ᵀ Γ (∫ ϱ g_k dv).
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest moment index supported (`Λ6` is needed by `⟨g3,g3⟩`).
pub const MAX_POWER: usize = 6;

/// Largest `|rate·(c2-c1)|` accepted before `e^{…}` leaves f64 range.
pub const MAX_EXPONENT: f64 = 700.0;

fn check_interval(c1: f64, c2: f64) -> Result<()> {
    if !(c1.is_finite() && c2.is_finite()) || c1 >= c2 {
        return Err(Error::InvalidInterval { c1, c2 });
    }
    Ok(())
}

/// `∫_0^len e^{-b w} w^l dw` for `l = 0..=max`, each term summed from
/// positive pieces only.
fn k_integrals(b: f64, len: f64, max: usize) -> Vec<f64> {
    let x = b * len;
    let mut out = Vec::with_capacity(max + 1);
    let mut lpow = len;
    for l in 0..=max {
        let v = if x <= 0.0 {
            // e^{|x| s}: expand the exponential, every term positive
            let ax = -x;
            let mut term = 1.0;
            let mut sum = 0.0;
            let mut j = 0usize;
            loop {
                let piece = term / (j + l + 1) as f64;
                sum += piece;
                if j as f64 > ax && piece <= 1e-17 * sum {
                    break;
                }
                j += 1;
                term *= ax / j as f64;
            }
            lpow * sum
        } else if x <= 40.0 {
            // e^{-x} Σ_{j>l} l! x^{j-l-1}/j!, first term 1/(l+1)
            let mut term = 1.0 / (l + 1) as f64;
            let mut sum = 0.0;
            let mut j = l + 1;
            loop {
                sum += term;
                if j as f64 > x && term <= 1e-17 * sum {
                    break;
                }
                term *= x / (j + 1) as f64;
                j += 1;
            }
            lpow * (-x).exp() * sum
        } else {
            let mut partial = 0.0;
            let mut term = 1.0;
            for j in 0..=l {
                if j > 0 {
                    term *= x / j as f64;
                }
                partial += term;
            }
            let fact: f64 = (1..=l).map(|v| v as f64).product();
            fact / b.powi(l as i32 + 1) * (1.0 - (-x).exp() * partial)
        };
        out.push(v);
        lpow *= len;
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for j in 0..k {
        r = r * (n - j) as f64 / (j + 1) as f64;
    }
    r
}

/// Moments `Λ_i = ∫_{c1}^{c2} e^{rate(v-c2)} v^i dv` for `i = 0..=max_power`.
///
/// `rate` may take either sign. The evaluation never divides by `rate`, so
/// it is uniform across `rate → 0`.
pub fn compute_moments(c1: f64, c2: f64, rate: f64, max_power: usize) -> Result<Vec<f64>> {
    check_interval(c1, c2)?;
    if max_power > MAX_POWER {
        return Err(Error::UnsupportedPower {
            requested: max_power,
            max: MAX_POWER,
        });
    }
    if !rate.is_finite() {
        return Err(Error::MomentOverflow(rate));
    }
    let len = c2 - c1;
    if (rate * len).abs() > MAX_EXPONENT {
        return Err(Error::MomentOverflow(rate * len));
    }
    let mut out = vec![0.0; max_power + 1];
    if c1 >= 0.0 {
        // v = c1 + w, all expansion terms nonnegative
        let k = k_integrals(-rate, len, max_power);
        let pre = (-rate * len).exp();
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = (0..=i)
                .map(|l| binomial(i, l) * c1.powi((i - l) as i32) * k[l])
                .sum();
            *o = pre * s;
        }
    } else if c2 <= 0.0 {
        // v = c2 - w, every term carries the sign (-1)^i
        let k = k_integrals(rate, len, max_power);
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = (0..=i)
                .map(|l| binomial(i, l) * (-c2).powi((i - l) as i32) * k[l])
                .sum();
            *o = if i % 2 == 0 { s } else { -s };
        }
    } else {
        let left = k_integrals(rate, -c1, max_power);
        let right = k_integrals(-rate, c2, max_power);
        let pre = (-rate * c2).exp();
        for (i, o) in out.iter_mut().enumerate() {
            let l = if i % 2 == 0 { left[i] } else { -left[i] };
            *o = pre * (l + right[i]);
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::MomentOverflow(rate * len));
    }
    Ok(out)
}

/// Coefficients of `g1 = v + k̄`, `g2 = v² + c v + m`,
/// `g3 = v³ + ħ v² + q v + r`, plus the four norms `⟨g_k,g_k⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub kbar: f64,
    pub c: f64,
    pub m: f64,
    pub hbar: f64,
    pub q: f64,
    pub r: f64,
    pub norms: [f64; 4],
}

impl Coefficients {
    /// Evaluates `g_k(v)` for `k = 0..=3`.
    pub fn g(&self, k: usize, v: f64) -> f64 {
        match k {
            0 => 1.0,
            1 => v + self.kbar,
            2 => v * v + self.c * v + self.m,
            3 => ((v + self.hbar) * v + self.q) * v + self.r,
            _ => panic!("g_k is defined for k <= 3"),
        }
    }

    /// `1/⟨g_k,g_k⟩`, the weights of the inequality's right side.
    pub fn weights(&self) -> [f64; 4] {
        self.norms.map(|n| 1.0 / n)
    }

    /// Same family on the interval translated by `shift` and scaled by
    /// `scale` (`v = shift + scale·t`).
    fn rescale(&self, shift: f64, scale: f64) -> Coefficients {
        let s = shift;
        let (kb, c, m) = (scale * self.kbar, scale * self.c, scale * scale * self.m);
        let (hb, q, r) = (
            scale * self.hbar,
            scale * scale * self.q,
            scale.powi(3) * self.r,
        );
        Coefficients {
            kbar: kb - s,
            c: c - 2.0 * s,
            m: s * s - c * s + m,
            hbar: hb - 3.0 * s,
            q: 3.0 * s * s - 2.0 * hb * s + q,
            r: -s.powi(3) + hb * s * s - q * s + r,
            norms: [
                self.norms[0] * scale,
                self.norms[1] * scale.powi(3),
                self.norms[2] * scale.powi(5),
                self.norms[3] * scale.powi(7),
            ],
        }
    }
}

/// Closed-form coefficients from `Λ0..Λ6`.
pub fn compute_coefficients(moments: &[f64]) -> Result<Coefficients> {
    if moments.len() < 7 {
        return Err(Error::DimensionMismatch(format!(
            "need 7 moments, got {}",
            moments.len()
        )));
    }
    let [l0, l1, l2, l3, l4, l5, l6]: [f64; 7] = moments[..7].try_into().expect("length checked");
    if !(l0 > 0.0) {
        return Err(Error::DegenerateBasis(format!("Λ0 = {l0} is not positive")));
    }
    let scale2 = l1 * l1 + (l2 * l0).abs();
    let den2 = l1 * l1 - l2 * l0;
    if !(den2.abs() > 1e-14 * scale2) {
        return Err(Error::DegenerateBasis(format!(
            "second Hankel denominator {den2:e} vanishes"
        )));
    }
    let kbar = -l1 / l0;
    let m = (l2 * l2 - l1 * l3) / den2;
    let c = (l0 * l3 - l1 * l2) / den2;

    let den3 = l4 * l1 * l1 - 2.0 * l1 * l2 * l3 + l2.powi(3) - l0 * l2 * l4 + l0 * l3 * l3;
    let scale3 = (l4 * l1 * l1).abs()
        + (2.0 * l1 * l2 * l3).abs()
        + l2.powi(3).abs()
        + (l0 * l2 * l4).abs()
        + (l0 * l3 * l3).abs();
    if !(den3.abs() > 1e-14 * scale3) {
        return Err(Error::DegenerateBasis(format!(
            "third Hankel denominator {den3:e} vanishes"
        )));
    }
    let hbar = (-l5 * l1 * l1 + l4 * l1 * l2 + l1 * l3 * l3 - l2 * l2 * l3 + l0 * l5 * l2
        - l0 * l4 * l3)
        / den3;
    let q = (-l2 * l2 * l4 + l2 * l3 * l3 + l1 * l5 * l2 - l1 * l3 * l4 - l0 * l5 * l3
        + l0 * l4 * l4)
        / den3;
    let r = -(l5 * l2 * l2 - 2.0 * l2 * l3 * l4 + l3.powi(3) - l1 * l5 * l3 + l1 * l4 * l4) / den3;

    let n0 = l0;
    let n1 = l2 + 2.0 * kbar * l1 + kbar * kbar * l0;
    let n2 = l4 + 2.0 * c * l3 + (c * c + 2.0 * m) * l2 + 2.0 * m * c * l1 + m * m * l0;
    let n3 = l6
        + 2.0 * hbar * l5
        + (hbar * hbar + 2.0 * q) * l4
        + (2.0 * hbar * q + 2.0 * r) * l3
        + (2.0 * hbar * r + q * q) * l2
        + 2.0 * q * r * l1
        + r * r * l0;
    let norms = [n0, n1, n2, n3];
    if let Some(bad) = norms.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::DegenerateBasis(format!(
            "norm {bad:e} is not positive"
        )));
    }
    Ok(Coefficients {
        kbar,
        c,
        m,
        hbar,
        q,
        r,
        norms,
    })
}

/// Coefficients of the unweighted (`δ = 0`) family: shifted Legendre
/// polynomials made monic.
pub fn limit_coefficients(c1: f64, c2: f64) -> Result<Coefficients> {
    check_interval(c1, c2)?;
    let l = c2 - c1;
    let s = c1 + c2;
    Ok(Coefficients {
        kbar: -s / 2.0,
        c: -s,
        m: (c1 * c1 + 4.0 * c1 * c2 + c2 * c2) / 6.0,
        hbar: -1.5 * s,
        q: 3.0 * (c1 * c1 + 3.0 * c1 * c2 + c2 * c2) / 5.0,
        r: -s * (c1 * c1 + 8.0 * c1 * c2 + c2 * c2) / 20.0,
        norms: [l, l.powi(3) / 12.0, l.powi(5) / 180.0, l.powi(7) / 2800.0],
    })
}

/// Orthogonal basis on `[c1, c2]` for the weight parameter `δ ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedBasis {
    pub c1: f64,
    pub c2: f64,
    pub delta: f64,
    /// `Λ_i = ∫ e^{-δ(v-c2)} v^i dv`, the inner-product moments.
    pub moments: [f64; 7],
    pub coefficients: Coefficients,
}

impl WeightedBasis {
    pub fn new(c1: f64, c2: f64, delta: f64) -> Result<Self> {
        check_interval(c1, c2)?;
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::NegativeDelta(delta));
        }
        let rate = -delta;
        let moments: [f64; 7] = compute_moments(c1, c2, rate, MAX_POWER)?
            .try_into()
            .expect("seven moments");
        // Evaluated on [-1, 1], then mapped back.
        let half = 0.5 * (c2 - c1);
        let mid = 0.5 * (c1 + c2);
        let unit = compute_moments(-1.0, 1.0, rate * half, MAX_POWER)?;
        let coefficients = compute_coefficients(&unit)?.rescale(mid, half);
        Ok(WeightedBasis {
            c1,
            c2,
            delta,
            moments,
            coefficients,
        })
    }

    /// `e^{δ(v-c2)}`, the weight of the inequality integrand.
    pub fn integrand_weight(&self, v: f64) -> f64 {
        (self.delta * (v - self.c2)).exp()
    }

    /// `e^{-δ(v-c2)}`, the weight of the inner product.
    pub fn inner_weight(&self, v: f64) -> f64 {
        (-self.delta * (v - self.c2)).exp()
    }

    pub fn g(&self, k: usize, v: f64) -> f64 {
        self.coefficients.g(k, v)
    }

    pub fn norms(&self) -> [f64; 4] {
        self.coefficients.norms
    }

    pub fn weights(&self) -> [f64; 4] {
        self.coefficients.weights()
    }

    pub fn len(&self) -> f64 {
        self.c2 - self.c1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Quadrature;
    use proptest::prelude::*;

    fn oracle() -> Quadrature {
        Quadrature::with_tolerances(0.0, 1e-14)
    }

    fn quad_moment(c1: f64, c2: f64, rate: f64, i: i32) -> f64 {
        oracle()
            .integrate(|v| (rate * (v - c2)).exp() * v.powi(i), c1, c2)
            .unwrap()
    }

    #[test]
    fn trivial_and_closed_form_moments() {
        let m = compute_moments(-1.0, 0.0, 0.0, 6).unwrap();
        assert_eq!(m[0], 1.0);
        let m = compute_moments(-1.0, 0.0, 2.0, 6).unwrap();
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((m[0] - exact).abs() < 1e-15);
        let q = quad_moment(-1.0, 0.0, 2.0, 1);
        assert!((m[1] - q).abs() < 1e-10 * q.abs());
    }

    #[test]
    fn moments_match_quadrature_in_all_regimes() {
        let intervals = [
            (-1.0, 0.0),
            (-4.0, 0.0),
            (0.5, 2.0),
            (-1.5, 0.7),
            (-3.0, -1.0),
        ];
        let rates = [0.0, 1e-9, 1e-6, 1e-3, 0.7, -2.0, 10.0, -10.0, 45.0];
        for &(c1, c2) in &intervals {
            for &rate in &rates {
                let m = compute_moments(c1, c2, rate, 6).unwrap();
                for i in 0..=6 {
                    let q = quad_moment(c1, c2, rate, i as i32);
                    let scale = oracle()
                        .integrate(|v| (rate * (v - c2)).exp() * v.abs().powi(i as i32), c1, c2)
                        .unwrap();
                    assert!(
                        (m[i] - q).abs() <= 1e-12 * scale,
                        "c1={c1} c2={c2} rate={rate} i={i}: {} vs {q}",
                        m[i]
                    );
                }
            }
        }
    }

    #[test]
    fn moment_errors() {
        assert!(matches!(
            compute_moments(0.0, 0.0, 1.0, 2),
            Err(Error::InvalidInterval { .. })
        ));
        assert!(matches!(
            compute_moments(-1.0, 0.0, 1.0, 7),
            Err(Error::UnsupportedPower { .. })
        ));
        assert!(matches!(
            compute_moments(-10.0, 0.0, 100.0, 2),
            Err(Error::MomentOverflow(_))
        ));
        assert!(matches!(
            WeightedBasis::new(-1.0, 0.0, -0.1),
            Err(Error::NegativeDelta(_))
        ));
    }

    #[test]
    fn limits_on_unit_interval() {
        let l = limit_coefficients(0.0, 1.0).unwrap();
        assert!((l.kbar + 0.5).abs() < 1e-15);
        assert!((l.c + 1.0).abs() < 1e-15);
        assert!((l.m - 1.0 / 6.0).abs() < 1e-15);
        let w = l.weights();
        assert_eq!([w[0], w[1], w[2], w[3]], [1.0, 12.0, 180.0, 2800.0]);
        let s = limit_coefficients(-1.0, 1.0).unwrap();
        assert_eq!(s.kbar, 0.0);
        assert_eq!(s.hbar, 0.0);
        let b = limit_coefficients(-1.0, 0.0).unwrap();
        assert!((b.kbar - 0.5).abs() < 1e-15);
        assert!((b.hbar - 1.5).abs() < 1e-15);
        assert!((b.q - 0.6).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_agree_with_normalized_path() {
        let b = WeightedBasis::new(-1.0, 0.0, 2.0).unwrap();
        let direct = compute_coefficients(&b.moments).unwrap();
        let a = b.coefficients;
        for (x, y) in [
            (a.kbar, direct.kbar),
            (a.c, direct.c),
            (a.m, direct.m),
            (a.hbar, direct.hbar),
            (a.q, direct.q),
            (a.r, direct.r),
        ] {
            assert!((x - y).abs() < 1e-11 * (1.0 + y.abs()), "{x} vs {y}");
        }
        for k in 0..4 {
            assert!((a.norms[k] - direct.norms[k]).abs() < 1e-11 * direct.norms[k]);
        }
    }

    /// Gram–Schmidt on monomials under a quadrature inner product.
    fn gram_schmidt(c1: f64, c2: f64, delta: f64) -> Vec<Vec<f64>> {
        let q = Quadrature::default();
        let ip = |a: &[f64], b: &[f64]| {
            q.integrate(
                |v| {
                    let pa: f64 = a.iter().rev().fold(0.0, |s, c| s * v + c);
                    let pb: f64 = b.iter().rev().fold(0.0, |s, c| s * v + c);
                    (-delta * (v - c2)).exp() * pa * pb
                },
                c1,
                c2,
            )
            .unwrap()
        };
        let mut polys: Vec<Vec<f64>> = Vec::new();
        for k in 0..4 {
            let mut p = vec![0.0; k + 1];
            p[k] = 1.0;
            let mono = p.clone();
            for prev in &polys {
                let proj = ip(&mono, prev) / ip(prev, prev);
                for (j, c) in prev.iter().enumerate() {
                    p[j] -= proj * c;
                }
            }
            polys.push(p);
        }
        polys
    }

    #[test]
    fn coefficients_match_gram_schmidt_oracle() {
        for &(c1, c2, delta) in &[(-1.0, 0.0, 2.0), (-3.0, 0.0, 0.4), (0.5, 2.5, 5.0)] {
            let b = WeightedBasis::new(c1, c2, delta).unwrap();
            let gs = gram_schmidt(c1, c2, delta);
            let a = b.coefficients;
            let pairs = [
                (a.kbar, gs[1][0]),
                (a.c, gs[2][1]),
                (a.m, gs[2][0]),
                (a.hbar, gs[3][2]),
                (a.q, gs[3][1]),
                (a.r, gs[3][0]),
            ];
            for (x, y) in pairs {
                assert!((x - y).abs() <= 1e-8 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn polynomials_are_orthogonal() {
        let b = WeightedBasis::new(-2.0, 0.0, 1.3).unwrap();
        let q = Quadrature::default();
        for i in 0..4 {
            for j in 0..4 {
                let v = q
                    .integrate(|v| b.inner_weight(v) * b.g(i, v) * b.g(j, v), b.c1, b.c2)
                    .unwrap();
                if i == j {
                    assert!((v - b.norms()[i]).abs() < 1e-9 * v);
                } else {
                    let s = (b.norms()[i] * b.norms()[j]).sqrt();
                    assert!(v.abs() <= 1e-8 * s, "<g{i},g{j}> = {v}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn small_delta_matches_limits(c1 in -5.0f64..4.0, len in 0.1f64..3.0) {
            let c2 = c1 + len;
            let b = WeightedBasis::new(c1, c2, 1e-8).unwrap();
            let l = limit_coefficients(c1, c2).unwrap();
            let a = b.coefficients;
            for (x, y) in [(a.kbar, l.kbar), (a.c, l.c), (a.m, l.m), (a.hbar, l.hbar), (a.q, l.q), (a.r, l.r)] {
                prop_assert!((x - y).abs() < 1e-6, "{} vs {}", x, y);
            }
            for k in 0..4 {
                prop_assert!((a.norms[k] - l.norms[k]).abs() <= 1e-6 * l.norms[k]);
            }
        }

        #[test]
        fn basis_invariants(c1 in -6.0f64..0.0, len in 0.05f64..6.0, delta in 0.0f64..20.0) {
            let c2 = c1 + len;
            let b = WeightedBasis::new(c1, c2, delta).unwrap();
            prop_assert!(b.norms().iter().all(|n| *n > 0.0));
            prop_assert!(b.moments[0] > 0.0);
            prop_assert!(b.moments[0] <= len * (delta * len).exp().max(1.0) * (1.0 + 1e-14));
        }
    }
}
