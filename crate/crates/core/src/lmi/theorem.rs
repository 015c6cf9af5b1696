//! The certificate LMIs for the delayed network.
//!
//! The augmented state χ stacks fifteen `n`-blocks:
//!
//! | block | content |
//! |---|---|
//! | 1, 2, 3 | `r(t)`, `r(t-h(t))`, `r(t-h)` |
//! | 4, 5 | `g(r(t))`, `g(r(t-h(t)))` |
//! | 6, 7, 8 | first-order averages over `[t-h,t]`, `[t-h(t),t]`, `[t-h,t-h(t)]` |
//! | 9, 10, 11 | second-order averages over the same intervals |
//! | 12, 13, 14 | third-order averages over the same intervals |
//! | 15 | `r(t-ξ)` |

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::affine::{AffineSymMap, MapBuilder};
use super::layout::{Layout, Var};
use super::{Constraint, LmiProblem, ProblemMetadata, Sense};
use crate::basis::{Coefficients, WeightedBasis};
use crate::error::{Error, Result};
use crate::system::DelayedNNSystem;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// Corrected third-order row, both signs of `ḣ`, and the growing-delay
    /// factor on the `(1-μ)` term.
    #[default]
    Sound,
    /// Uncorrected third-order row, the `ḣ = μ` vertex only, plain `(1-μ)`.
    AsPrinted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremParams {
    /// Delay bound `h`.
    pub h: f64,
    /// Bound on `ḣ(t)`.
    pub mu: f64,
    /// Decay rate `k`.
    pub k: f64,
    /// Split point `ξ ∈ (0, h)`.
    pub xi: f64,
    #[serde(default)]
    pub formulation: Formulation,
}

impl TheoremParams {
    pub fn new(h: f64, mu: f64, k: f64, xi: f64) -> Self {
        TheoremParams {
            h,
            mu,
            k,
            xi,
            formulation: Formulation::Sound,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.h, self.mu, self.k, self.xi]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Precondition("parameters must be finite".into()));
        }
        if !(self.h > 0.0) {
            return Err(Error::OutOfRange(format!(
                "h = {} must be positive",
                self.h
            )));
        }
        if !(self.k > 0.0) {
            return Err(Error::OutOfRange(format!(
                "k = {} must be positive",
                self.k
            )));
        }
        if !(self.mu >= 0.0) {
            return Err(Error::OutOfRange(format!(
                "mu = {} must be non-negative",
                self.mu
            )));
        }
        if !(self.xi > 0.0 && self.xi < self.h) {
            return Err(Error::OutOfRange(format!(
                "xi = {} must lie in (0, h = {})",
                self.xi, self.h
            )));
        }
        Ok(())
    }

    /// Weight of the `[r(t-h(t)); g(r(t-h(t)))]` term.
    pub fn delayed_q_factor(&self) -> f64 {
        let base = 1.0 - self.mu;
        match self.formulation {
            Formulation::Sound if base < 0.0 => base * (2.0 * self.k * self.h).exp(),
            _ => base,
        }
    }
}

/// Block selectors `u_i` (`15n × n`) and `u_v = -u1 K0 + u4 K1 + u5 K2`.
#[derive(Clone, Debug)]
pub struct SelectorBank {
    pub n: usize,
    blocks: Vec<DMatrix<f64>>,
    pub uv: DMatrix<f64>,
}

impl SelectorBank {
    /// `u_i`, 1-based.
    pub fn u(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i - 1]
    }

    pub fn dim(&self) -> usize {
        15 * self.n
    }
}

pub fn build_selectors(sys: &DelayedNNSystem) -> SelectorBank {
    let n = sys.dim();
    let big = 15 * n;
    let blocks: Vec<DMatrix<f64>> = (0..15)
        .map(|b| {
            let mut m = DMatrix::zeros(big, n);
            for j in 0..n {
                m[(b * n + j, j)] = 1.0;
            }
            m
        })
        .collect();
    let uv = -&blocks[0] * sys.k0_matrix() + &blocks[3] * &sys.k1 + &blocks[4] * &sys.k2;
    SelectorBank { n, blocks, uv }
}

fn hcat(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts[0].nrows();
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut m = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        m.view_mut((0, at), (rows, p.ncols())).copy_from(p);
        at += p.ncols();
    }
    m
}

/// Selector of block `b` (size `n`) in a `blocks·n`-row stack.
fn block_embed(blocks: usize, n: usize, b: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(blocks * n, n);
    for j in 0..n {
        m[(b * n + j, j)] = 1.0;
    }
    m
}

/// The certificate's constraints plus the pieces of the derivative bound.
#[derive(Clone, Debug)]
pub struct CertificateLmis {
    pub problem: LmiProblem,
    pub layout: Layout,
    pub params: TheoremParams,
    pub coefficients: Coefficients,
    /// Everything in the derivative bound except the `ḣ` and `Θ` terms.
    pub base: AffineSymMap,
    /// Coefficient of `ḣ(t)`.
    pub rate: AffineSymMap,
    /// Coefficient of `h(t)/h` in the derivative bound.
    pub theta1: AffineSymMap,
    /// Coefficient of `1 - h(t)/h`.
    pub theta2: AffineSymMap,
}

struct Ctx<'a> {
    s: &'a SelectorBank,
    p: &'a TheoremParams,
    co: Coefficients,
    sector: DMatrix<f64>,
}

impl Ctx<'_> {
    fn u(&self, i: usize) -> &DMatrix<f64> {
        self.s.u(i)
    }

    fn sigma(&self, b: &mut MapBuilder) {
        let (h, k) = (self.p.h, self.p.k);
        let u = |i| self.u(i);
        let uv = &self.s.uv;
        let l = &self.sector;
        let co = &self.co;
        let nr = co.norms;
        let e2kh = (2.0 * k * h).exp();

        // Δ1
        let zh = hcat(&[u(1), &(u(6) * h), &(u(9) * h)]);
        b.quad(2.0 * k, &zh, Var::P);
        let u1l_u4 = u(1) * l - u(4);
        b.sym(2.0 * k, u(4), Var::D1, u(1));
        b.sym(2.0 * k, &u1l_u4, Var::D2, u(1));
        b.sym(1.0, u(4), Var::D1, uv);
        b.sym(1.0, &u1l_u4, Var::D2, uv);

        // Δ2
        let u14 = hcat(&[u(1), u(4)]);
        let u25 = hcat(&[u(2), u(5)]);
        b.quad(e2kh, &u14, Var::Q);
        b.quad(e2kh, u(1), Var::U1);
        b.quad(e2kh, u(1), Var::U2);
        b.quad(-self.p.delayed_q_factor(), &u25, Var::Q);
        let exi = (2.0 * k * (h - self.p.xi)).exp();
        b.quad(-exi, u(15), Var::U2);
        b.quad(exi, u(15), Var::U3);
        b.quad(-1.0, u(3), Var::U1);
        b.quad(-1.0, u(3), Var::U3);

        // Δ3
        let h2 = h * h;
        let h3 = h2 * h;
        b.quad(h2, uv, Var::Z1);
        b.quad(h2, u(1), Var::Z2);
        b.quad(h2, uv, Var::Z3);
        b.quad(h2, uv, Var::Z4);
        let a0 = u(6) * h;
        let a1 = u(6) * ((co.kbar - h) * h) + u(9) * (h2 / 2.0);
        let a2 = u(6) * ((h2 - co.c * h + co.m) * h)
            + u(9) * ((co.c - 2.0 * h) * h2 / 2.0)
            + u(12) * (h3 / 3.0);
        for (i, a) in [a0, a1, a2].iter().enumerate() {
            b.quad(-h / nr[i], a, Var::Z2);
        }
        let f9 = match self.p.formulation {
            Formulation::Sound => co.hbar - 3.0 * h,
            Formulation::AsPrinted => 2.0 * co.hbar - 6.0 * h,
        };
        let x0 = u(1) - u(3);
        let x1 = u(1) * co.kbar + u(3) * (h - co.kbar) - u(6) * h;
        let x2 =
            u(1) * co.m + u(3) * (co.c * h - co.m - h2) + u(6) * ((2.0 * h - co.c) * h) - u(9) * h2;
        let x3 = u(1) * co.r + u(3) * (h3 - co.hbar * h2 + co.q * h - co.r)
            - u(6) * ((3.0 * h2 - 2.0 * co.hbar * h + co.q) * h)
            - u(9) * (f9 * h2)
            - u(12) * h3;
        for (i, x) in [x0, x1, x2, x3].iter().enumerate() {
            b.quad(-h / nr[i], x, Var::Z3);
        }

        // Δ4
        b.quad(h2 / 2.0, uv, Var::N1);
        b.quad(h2 / 2.0, uv, Var::N2);
        let em = (-2.0 * k * h).exp();
        let n1_terms = [
            (2.0, u(1) - u(7)),
            (4.0, u(1) + u(7) * 2.0 - u(10) * 3.0),
            (2.0, u(2) - u(8)),
            (4.0, u(2) + u(8) * 2.0 - u(11) * 3.0),
        ];
        for (w, a) in &n1_terms {
            b.quad(-em * w, a, Var::N1);
        }
        let n2_terms = [
            (2.0, u(2) - u(7)),
            (4.0, u(2) - u(7) * 4.0 + u(10) * 3.0),
            (2.0, u(3) - u(8)),
            (4.0, u(3) - u(8) * 4.0 + u(11) * 3.0),
        ];
        for (w, a) in &n2_terms {
            b.quad(-em * w, a, Var::N2);
        }

        // Ψ1
        let g = |i: usize| {
            [
                u(i) - u(i + 1),
                u(i) + u(i + 1) - u(i + 6) * 2.0,
                u(i) - u(i + 1) + u(i + 6) * 6.0 - u(i + 9) * 6.0,
                u(i) + u(i + 1) - u(i + 6) * 12.0 + u(i + 9) * 30.0 - u(i + 12) * 20.0,
            ]
        };
        let (ga, gb) = (g(1), g(2));
        for (j, (a, c)) in ga.iter().zip(&gb).enumerate() {
            let w = (2 * j + 1) as f64;
            b.quad(-em * w, a, Var::Z1);
            b.quad(-em * w, c, Var::Z1);
        }
        let ga_cat = hcat(&[&ga[0], &ga[1], &ga[2], &ga[3]]);
        let gb_cat = hcat(&[&gb[0], &gb[1], &gb[2], &gb[3]]);
        b.sym(-em, &ga_cat, Var::S1, &gb_cat);

        // Ψ2
        let c2 = 2.0 * k * h / (e2kh - 1.0);
        let d12 = u(1) - u(2);
        let d23 = u(2) - u(3);
        b.quad(-c2, &d12, Var::Z4);
        b.quad(-c2, &d23, Var::Z4);
        b.sym(-c2, &d12, Var::S2, &d23);

        // Π
        b.sym(1.0, &(u(1) * l), Var::R1, u(4));
        b.quad(-2.0, u(4), Var::R1);
        b.sym(1.0, &(u(2) * l), Var::R2, u(5));
        b.quad(-2.0, u(5), Var::R2);
    }

    /// `u1 (M1 - M2) u1ᵀ / h`, the coefficient of `ḣ(t)`.
    fn rate_term(&self, b: &mut MapBuilder) {
        let h = self.p.h;
        b.quad(1.0 / h, self.u(1), Var::M1);
        b.quad(-1.0 / h, self.u(1), Var::M2);
    }

    fn theta(&self, b: &mut MapBuilder, second: bool) {
        let h = self.p.h;
        let k = self.p.k;
        let u = |i| self.u(i);
        let uv = &self.s.uv;
        let rf = hcat(&[uv, &(u(1) - u(3)), &((u(1) - u(6)) * 2.0)]);
        let mid = if second { 8 } else { 7 };
        let zl = hcat(&[u(1), &(u(mid) * h), &(u(9) * h)]);
        b.sym(1.0, &zl, Var::P, &rf);
        let m = if second { Var::M2 } else { Var::M1 };
        b.quad(2.0 * k, u(1), m);
        b.sym(1.0, u(1), m, uv);
    }
}

/// Builds every constraint of the certificate for `sys` at `params`.
pub fn assemble(sys: &DelayedNNSystem, params: &TheoremParams) -> Result<CertificateLmis> {
    sys.validate()?;
    params.validate()?;
    let n = sys.dim();
    let layout = Layout::new(n);
    let basis = WeightedBasis::new(-params.h, 0.0, 2.0 * params.k)?;
    let sel = build_selectors(sys);
    let ctx = Ctx {
        s: &sel,
        p: params,
        co: basis.coefficients,
        sector: sys.sector_matrix(),
    };
    let big = sel.dim();

    let build = |f: &dyn Fn(&mut MapBuilder)| {
        let mut b = MapBuilder::new(&layout, big);
        f(&mut b);
        b.finish()
    };
    let base = build(&|b| ctx.sigma(b));
    let rate = build(&|b| ctx.rate_term(b));
    let theta1 = build(&|b| ctx.theta(b, false));
    let theta2 = build(&|b| ctx.theta(b, true));

    let vertices: &[f64] = match params.formulation {
        Formulation::Sound => &[1.0, -1.0],
        Formulation::AsPrinted => &[1.0],
    };
    let mut constraints = vec![];
    for &sign in vertices {
        let sigma = base.add(&rate.scaled(sign * params.mu))?;
        let tag = if sign > 0.0 { "" } else { "-falling" };
        for (i, theta) in [&theta1, &theta2].into_iter().enumerate() {
            constraints.push(Constraint::new(
                format!("derivative-bound-{}{tag}", i + 1),
                sigma.add(theta)?,
                Sense::Nsd,
            ));
        }
    }

    // Γ: the coupling block over both sub-intervals.
    {
        let mut b = MapBuilder::new(&layout, 8 * n);
        for j in 0..4 {
            let w = (2 * j + 1) as f64;
            let top = block_embed(8, n, j);
            let bot = block_embed(8, n, 4 + j);
            b.quad(w, &top, Var::Z1);
            b.quad(w, &top, Var::N1);
            b.quad(w, &bot, Var::Z1);
            b.quad(w, &bot, Var::N2);
        }
        let (top, bot) = half_embeds(8 * n, 4 * n);
        b.sym(1.0, &top, Var::S1, &bot);
        constraints.push(Constraint::new("coupling-gamma", b.finish(), Sense::Psd));
    }
    {
        let mut b = MapBuilder::new(&layout, 2 * n);
        let (top, bot) = half_embeds(2 * n, n);
        b.quad(1.0, &top, Var::Z4);
        b.quad(1.0, &bot, Var::Z4);
        b.sym(1.0, &top, Var::S2, &bot);
        constraints.push(Constraint::new("coupling-omega", b.finish(), Sense::Psd));
    }
    for v in Var::ALL {
        if matches!(v, Var::S1 | Var::S2) {
            continue;
        }
        let s = v.size(n);
        let mut b = MapBuilder::new(&layout, s);
        b.quad(1.0, &DMatrix::identity(s, s), v);
        constraints.push(Constraint::new(v.name(), b.finish(), Sense::Psd));
    }

    let problem = LmiProblem {
        num_vars: layout.len(),
        constraints,
        metadata: Some(ProblemMetadata {
            n,
            h: params.h,
            mu: params.mu,
            k: params.k,
            xi: params.xi,
            formulation: params.formulation,
        }),
    };
    Ok(CertificateLmis {
        problem,
        layout,
        params: *params,
        coefficients: basis.coefficients,
        base,
        rate,
        theta1,
        theta2,
    })
}

fn half_embeds(total: usize, half: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut top = DMatrix::zeros(total, half);
    let mut bot = DMatrix::zeros(total, half);
    for j in 0..half {
        top[(j, j)] = 1.0;
        bot[(half + j, j)] = 1.0;
    }
    (top, bot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::asymmetry;
    use crate::lmi::layout::LmiVariables;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn example1() -> DelayedNNSystem {
        DelayedNNSystem::new(
            vec![2.0, 3.5],
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.5, -1.0]),
            DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, 0.5]),
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    fn random_x(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn shapes_and_symmetry() {
        let sys = example1();
        let lmis = assemble(&sys, &TheoremParams::new(1.0, 0.8, 0.5, 0.5)).unwrap();
        let p = &lmis.problem;
        assert_eq!(p.num_vars, 140);
        let dims: Vec<usize> = p.constraints.iter().map(|c| c.dim()).collect();
        assert_eq!(&dims[..6], &[30, 30, 30, 30, 16, 4]);
        assert_eq!(p.constraints.len(), 6 + 17);
        let x = random_x(p.num_vars, 7);
        for c in &p.constraints {
            let m = c.map.evaluate(&x);
            assert!(asymmetry(&m) <= 1e-12);
        }
        let printed = TheoremParams {
            formulation: Formulation::AsPrinted,
            ..TheoremParams::new(1.0, 0.8, 0.5, 0.5)
        };
        assert_eq!(
            assemble(&sys, &printed).unwrap().problem.constraints.len(),
            21
        );
    }

    #[test]
    fn maps_are_affine() {
        let lmis = assemble(&example1(), &TheoremParams::new(1.2, 0.5, 0.3, 0.4)).unwrap();
        let x = random_x(lmis.layout.len(), 1);
        let y = random_x(lmis.layout.len(), 2);
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.3 * a - 1.7 * b).collect();
        for c in &lmis.problem.constraints {
            let f0 = c.map.constant_matrix();
            let lhs = c.map.evaluate(&z) - &f0;
            let rhs = (c.map.evaluate(&x) - &f0) * 0.3 - (c.map.evaluate(&y) - &f0) * 1.7;
            assert!((lhs - rhs).amax() < 1e-10, "{}", c.name);
        }
    }

    #[test]
    fn delayed_q_factor_by_formulation() {
        let mut p = TheoremParams::new(1.0, 1.5, 0.5, 0.5);
        assert!((p.delayed_q_factor() + 0.5 * 1f64.exp()).abs() < 1e-15);
        p.formulation = Formulation::AsPrinted;
        assert_eq!(p.delayed_q_factor(), -0.5);
        p.mu = 0.4;
        p.formulation = Formulation::Sound;
        assert_eq!(p.delayed_q_factor(), 0.6);
    }

    #[test]
    fn rejects_bad_parameters() {
        let sys = example1();
        for p in [
            TheoremParams::new(0.0, 0.5, 0.5, 0.1),
            TheoremParams::new(1.0, -0.1, 0.5, 0.5),
            TheoremParams::new(1.0, 0.5, 0.0, 0.5),
            TheoremParams::new(1.0, 0.5, 0.5, 1.0),
            TheoremParams::new(f64::NAN, 0.5, 0.5, 0.5),
        ] {
            assert!(assemble(&sys, &p).is_err());
        }
    }

    #[test]
    fn dense_sigma_spot_check() {
        // A single-variable spot check against a direct dense product.
        let sys = example1();
        let params = TheoremParams::new(1.0, 0.8, 0.5, 0.5);
        let lmis = assemble(&sys, &params).unwrap();
        let sel = build_selectors(&sys);
        let mut vars = LmiVariables::zeros(2);
        let z2 = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        vars.set(Var::Z2, z2.clone()).unwrap();
        let x = vars.flatten(&lmis.layout);
        let (h, co) = (params.h, lmis.coefficients);
        let u = |i| sel.u(i);
        let a = [
            u(6) * h,
            u(6) * ((co.kbar - h) * h) + u(9) * (h * h / 2.0),
            u(6) * ((h * h - co.c * h + co.m) * h)
                + u(9) * ((co.c - 2.0 * h) * h * h / 2.0)
                + u(12) * (h * h * h / 3.0),
        ];
        let mut dense = u(1) * &z2 * u(1).transpose() * (h * h);
        for (i, ai) in a.iter().enumerate() {
            dense -= ai * &z2 * ai.transpose() * (h / co.norms[i]);
        }
        assert!((lmis.base.evaluate(&x) - dense).amax() < 1e-12);
    }
}
