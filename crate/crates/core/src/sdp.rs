//! Feasibility of `F_j(x) ⪰ margin_j·I` (or `⪯ -margin_j·I`) by a
//! primal barrier method on
//!
//! ```text
//! minimize t  subject to  G_j(x) + t·I ⪰ 0,  ‖x‖ ≤ R
//! ```
//!
//! where `G_j` is the normalized, rescaled constraint. A negative `t`
//! is a strict witness; a certified positive lower bound on the optimum
//! proves infeasibility inside the ball.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::lmi::LmiProblem;
use crate::parallel::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    /// Iteration budget exhausted before either certificate appeared.
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    /// Witness when feasible, last iterate otherwise.
    pub x: Vec<f64>,
    pub t: f64,
    /// Lower bound on the optimal `t` from the last centred point.
    pub t_lower: f64,
    pub newton_steps: usize,
    /// Smallest eigenvalue of any normalized constraint at `x`.
    pub min_eigenvalue: f64,
}

impl FeasibilityResult {
    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }
}

pub trait FeasibilitySolver {
    fn solve(&self, problem: &LmiProblem) -> Result<FeasibilityResult>;
}

/// Smallest eigenvalue over every `±F_j(x) - margin_j·I`; the point is a
/// witness iff this is non-negative.
pub fn verify_witness(problem: &LmiProblem, x: &[f64]) -> Result<f64> {
    if x.len() != problem.num_vars {
        return Err(Error::DimensionMismatch(format!(
            "witness has {} entries, problem has {} variables",
            x.len(),
            problem.num_vars
        )));
    }
    problem.worst_eigenvalue(x)
}

#[derive(Clone, Debug)]
pub struct BarrierSolver {
    /// Ball radius; `None` picks `100·sqrt(num_vars)`.
    pub radius: Option<f64>,
    pub sigma0: f64,
    pub sigma_growth: f64,
    pub max_newton_steps: usize,
    /// Newton decrement below which a point counts as centred.
    pub centring_tol: f64,
    pub exec: Execution,
}

impl Default for BarrierSolver {
    fn default() -> Self {
        BarrierSolver {
            radius: None,
            sigma0: 1000.0,
            sigma_growth: 8.0,
            max_newton_steps: 600,
            centring_tol: 0.05,
            exec: Execution::default(),
        }
    }
}

struct VarBlock {
    var: usize,
    support: Vec<usize>,
    /// `A_i` restricted to `support × support`.
    local: DMatrix<f64>,
}

struct Block {
    dim: usize,
    g0: DMatrix<f64>,
    vars: Vec<VarBlock>,
}

impl Block {
    fn new(c: &crate::lmi::Constraint) -> Block {
        let sign = c.sign();
        let mut scale: f64 = 0.0;
        for (_, es) in &c.map.terms {
            for e in es {
                scale = scale.max(e.2.abs());
            }
        }
        for e in &c.map.constant {
            scale = scale.max(e.2.abs());
        }
        let s = if scale > 0.0 { sign / scale } else { sign };
        let dim = c.dim();
        let mut g0 = c.map.constant_matrix() * s;
        for i in 0..dim {
            g0[(i, i)] -= c.margin * s.abs();
        }
        let vars = c
            .map
            .terms
            .iter()
            .map(|(j, es)| {
                let mut support: Vec<usize> = es.iter().flat_map(|e| [e.0, e.1]).collect();
                support.sort_unstable();
                support.dedup();
                let pos = |r: usize| support.binary_search(&r).unwrap();
                let mut local = DMatrix::zeros(support.len(), support.len());
                for &(r, cc, v) in es {
                    let (a, b) = (pos(r), pos(cc));
                    local[(a, b)] = s * v;
                    local[(b, a)] = s * v;
                }
                VarBlock {
                    var: *j,
                    support,
                    local,
                }
            })
            .collect();
        Block { dim, g0, vars }
    }

    fn eval(&self, x: &[f64], t: f64) -> DMatrix<f64> {
        let mut g = self.g0.clone();
        for vb in &self.vars {
            let xv = x[vb.var];
            if xv == 0.0 {
                continue;
            }
            for (a, &ra) in vb.support.iter().enumerate() {
                for (b, &rb) in vb.support.iter().enumerate() {
                    g[(ra, rb)] += xv * vb.local[(a, b)];
                }
            }
        }
        for i in 0..self.dim {
            g[(i, i)] += t;
        }
        g
    }
}

struct Barrier {
    blocks: Vec<Block>,
    m: usize,
    r2: f64,
    nu: f64,
}

fn cholesky(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m)
}

impl Barrier {
    /// `φ(x, t)`, or `None` outside the domain.
    fn value(&self, x: &[f64], t: f64) -> Option<f64> {
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        if norm2 >= self.r2 {
            return None;
        }
        let mut phi = -(self.r2 - norm2).ln();
        for b in &self.blocks {
            let ch = cholesky(b.eval(x, t))?;
            let ld: f64 = ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
            phi -= 2.0 * ld;
        }
        Some(phi)
    }

    /// Gradient and Hessian of `φ` over `(x, t)`.
    fn derivatives(
        &self,
        x: &[f64],
        t: f64,
        exec: Execution,
    ) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let m = self.m;
        let mut grad = DVector::zeros(m + 1);
        let mut hess = DMatrix::zeros(m + 1, m + 1);
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let gap = self.r2 - norm2;
        for i in 0..m {
            grad[i] += 2.0 * x[i] / gap;
            hess[(i, i)] += 2.0 / gap;
            for k in 0..m {
                hess[(i, k)] += 4.0 * x[i] * x[k] / (gap * gap);
            }
        }
        for b in &self.blocks {
            let w = cholesky(b.eval(x, t))?.inverse();
            let nv = b.vars.len();
            // Y_i = W A_i keeps only the columns in S_i; stored row-major.
            let ys: Vec<Vec<f64>> = exec.map(nv, |i| {
                let vb = &b.vars[i];
                let s = vb.support.len();
                let mut y = vec![0.0; b.dim * s];
                for a in 0..b.dim {
                    let out = &mut y[a * s..(a + 1) * s];
                    for (p, &rp) in vb.support.iter().enumerate() {
                        let wa = w[(a, rp)];
                        if wa == 0.0 {
                            continue;
                        }
                        for (c, o) in out.iter_mut().enumerate() {
                            *o += wa * vb.local[(p, c)];
                        }
                    }
                }
                y
            });
            // H_ik = tr(Y_i Y_k) for k ≥ i, plus tr(Y_i W) in the last slot.
            let mut rows = vec![0.0; nv * (nv + 1)];
            exec.fill_rows(&mut rows, nv + 1, |i, row| {
                let vi = &b.vars[i];
                let si = vi.support.len();
                let yi = &ys[i];
                for k in i..nv {
                    let vk = &b.vars[k];
                    let sk = vk.support.len();
                    let yk = &ys[k];
                    let mut acc = 0.0;
                    for (ai, &a) in vk.support.iter().enumerate() {
                        let ri = &yi[a * si..(a + 1) * si];
                        for (ci, &c) in vi.support.iter().enumerate() {
                            acc += ri[ci] * yk[c * sk + ai];
                        }
                    }
                    row[k] = acc;
                }
                let mut acc = 0.0;
                for a in 0..b.dim {
                    let ri = &yi[a * si..(a + 1) * si];
                    for (ci, &c) in vi.support.iter().enumerate() {
                        acc += ri[ci] * w[(c, a)];
                    }
                }
                row[nv] = acc;
            });
            for i in 0..nv {
                let vi = &b.vars[i];
                let gi = vi.var;
                let si = vi.support.len();
                let trace: f64 = vi
                    .support
                    .iter()
                    .enumerate()
                    .map(|(c, &r)| ys[i][r * si + c])
                    .sum();
                grad[gi] -= trace;
                let row = &rows[i * (nv + 1)..(i + 1) * (nv + 1)];
                for k in i..nv {
                    let gk = b.vars[k].var;
                    hess[(gi, gk)] += row[k];
                    if gk != gi {
                        hess[(gk, gi)] += row[k];
                    }
                }
                hess[(gi, m)] += row[nv];
                hess[(m, gi)] += row[nv];
            }
            grad[m] -= w.trace();
            hess[(m, m)] += w.component_mul(&w).sum();
        }
        Some((grad, hess))
    }
}

impl BarrierSolver {
    pub fn with_exec(exec: Execution) -> Self {
        BarrierSolver {
            exec,
            ..Default::default()
        }
    }

    fn barrier(&self, problem: &LmiProblem) -> Barrier {
        let m = problem.num_vars;
        let radius = self.radius.unwrap_or(100.0 * (m.max(1) as f64).sqrt());
        let blocks: Vec<Block> = problem.constraints.iter().map(Block::new).collect();
        let nu = blocks.iter().map(|b| b.dim as f64).sum::<f64>() + 1.0;
        Barrier {
            blocks,
            m,
            r2: radius * radius,
            nu,
        }
    }
}

fn newton_direction(grad: &DVector<f64>, hess: DMatrix<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut h = hess;
    for reg in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg * scale;
        }
        if let Some(ch) = Cholesky::new(hr) {
            return Some(-ch.solve(grad));
        }
    }
    h.fill(0.0);
    None
}

impl FeasibilitySolver for BarrierSolver {
    fn solve(&self, problem: &LmiProblem) -> Result<FeasibilityResult> {
        problem.validate()?;
        let bar = self.barrier(problem);
        let m = bar.m;
        let mut x = vec![0.0; m];
        let mut t = 1.0;
        for b in &bar.blocks {
            let lo = min_eigenvalue(&b.g0)?;
            t = f64::max(t, 1.0 - lo);
        }
        let mut sigma = self.sigma0;
        let mut steps = 0;
        let mut t_lower = f64::NEG_INFINITY;
        let finish = |status, x: Vec<f64>, t, t_lower, steps| -> Result<FeasibilityResult> {
            let min_eig = verify_witness(problem, &x)?;
            Ok(FeasibilityResult {
                status,
                x,
                t,
                t_lower,
                newton_steps: steps,
                min_eigenvalue: min_eig,
            })
        };

        loop {
            let mut centred = false;
            loop {
                if t < 0.0 && verify_witness(problem, &x)? >= 0.0 {
                    return finish(FeasibilityStatus::Feasible, x, t, t_lower, steps);
                }
                if steps >= self.max_newton_steps {
                    return finish(FeasibilityStatus::Undecided, x, t, t_lower, steps);
                }
                let (mut grad, hess) = match bar.derivatives(&x, t, self.exec) {
                    Some(d) => d,
                    None => {
                        return Err(Error::NumericalBreakdown(
                            "iterate left the barrier domain".into(),
                        ))
                    }
                };
                grad[m] += sigma;
                let Some(dir) = newton_direction(&grad, hess.clone()) else {
                    return finish(FeasibilityStatus::Undecided, x, t, t_lower, steps);
                };
                let dec2 = -grad.dot(&dir);
                let dec = dec2.max(0.0).sqrt();
                steps += 1;
                if dec <= self.centring_tol {
                    centred = true;
                    break;
                }
                let f0 = sigma * t + bar.value(&x, t).unwrap_or(f64::INFINITY);
                let mut alpha = 1.0;
                let mut moved = false;
                while alpha > 1e-12 {
                    let xn: Vec<f64> = x
                        .iter()
                        .zip(dir.iter())
                        .map(|(a, d)| a + alpha * d)
                        .collect();
                    let tn = t + alpha * dir[m];
                    if let Some(v) = bar.value(&xn, tn) {
                        if sigma * tn + v <= f0 + 1e-4 * alpha * grad.dot(&dir) {
                            x = xn;
                            t = tn;
                            moved = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if centred {
                t_lower = t - 2.0 * bar.nu / sigma;
            }
            if centred && t_lower > 0.0 {
                return finish(FeasibilityStatus::Infeasible, x, t, t_lower, steps);
            }
            sigma *= self.sigma_growth;
            if !sigma.is_finite() || sigma > 1e16 {
                return finish(FeasibilityStatus::Undecided, x, t, t_lower, steps);
            }
        }
    }
}
