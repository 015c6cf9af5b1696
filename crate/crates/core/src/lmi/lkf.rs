//! The augmented state χ(t) and the functional V(t) on a concrete history.

use nalgebra::DVector;

use super::layout::{LmiVariables, Var};
use super::theorem::TheoremParams;
use crate::error::{Error, Result};
use crate::linalg::quad_form;
use crate::quadrature::Quadrature;
use crate::system::DelayedNNSystem;

/// A shifted trajectory `r(s)` with its delay signal.
pub trait StateHistory {
    fn dim(&self) -> usize;
    /// First time at which `state` is defined.
    fn earliest(&self) -> f64;
    /// Last time at which `state` is defined.
    fn latest(&self) -> f64;
    fn state(&self, t: f64) -> DVector<f64>;
    fn derivative(&self, t: f64) -> DVector<f64>;
    /// `h(t)`.
    fn delay(&self, t: f64) -> f64;
    /// Points in `(a, b)` where the state is not smooth.
    fn breakpoints(&self, _a: f64, _b: f64) -> Vec<f64> {
        vec![]
    }
}

fn quadrature() -> Quadrature {
    Quadrature::with_tolerances(1e-14, 1e-12)
}

fn pieces<H: StateHistory + ?Sized>(hist: &H, a: f64, b: f64, extra: &[f64]) -> Vec<f64> {
    let mut pts = vec![a, b];
    pts.extend(hist.breakpoints(a, b));
    pts.extend(extra.iter().copied().filter(|p| *p > a && *p < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// `(ν1, ν2, ν3)` on `[a, b]`: `(k+1)/L^{k+1} ∫ (s-a)^k r(s) ds`.
/// A zero-length interval gives `r(a)` three times.
fn averages<H: StateHistory + ?Sized>(hist: &H, a: f64, b: f64) -> Result<[DVector<f64>; 3]> {
    let n = hist.dim();
    let len = b - a;
    if len <= 1e-12 * (1.0 + a.abs()) {
        let r = hist.state(a);
        return Ok([r.clone(), r.clone(), r]);
    }
    let pts = pieces(hist, a, b, &[]);
    let v = quadrature().integrate_vec_pieces(
        |s, out| {
            let r = hist.state(s);
            let d = s - a;
            for j in 0..n {
                out[j] = r[j];
                out[n + j] = d * r[j];
                out[2 * n + j] = d * d * r[j];
            }
        },
        3 * n,
        &pts,
    )?;
    let scale = [1.0 / len, 2.0 / (len * len), 3.0 / (len * len * len)];
    Ok([0, 1, 2].map(|k| DVector::from_iterator(n, (0..n).map(|j| scale[k] * v[k * n + j]))))
}

fn check_window<H: StateHistory + ?Sized>(hist: &H, t: f64, h: f64) -> Result<f64> {
    if t - h < hist.earliest() - 1e-12 || t > hist.latest() + 1e-12 {
        return Err(Error::InsufficientHistory {
            needed_from: t - h,
            needed_to: t,
            available_from: hist.earliest(),
        });
    }
    let ht = hist.delay(t);
    if !(ht >= 0.0 && ht <= h * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange(format!("h(t) = {ht} outside [0, {h}]")));
    }
    Ok(ht.min(h))
}

/// χ(t) as a `15n` vector.
pub fn assemble_chi<H: StateHistory + ?Sized>(
    hist: &H,
    sys: &DelayedNNSystem,
    params: &TheoremParams,
    t: f64,
) -> Result<DVector<f64>> {
    let n = sys.dim();
    if hist.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "history has {} states, system has {n}",
            hist.dim()
        )));
    }
    let h = params.h;
    let ht = check_window(hist, t, h)?;
    let r = hist.state(t);
    let rd = hist.state(t - ht);
    let rh = hist.state(t - h);
    let full = averages(hist, t - h, t)?;
    let near = averages(hist, t - ht, t)?;
    let far = averages(hist, t - h, t - ht)?;
    let blocks = [
        r.clone(),
        rd.clone(),
        rh,
        sys.g(&r),
        sys.g(&rd),
        full[0].clone(),
        near[0].clone(),
        far[0].clone(),
        full[1].clone(),
        near[1].clone(),
        far[1].clone(),
        full[2].clone(),
        near[2].clone(),
        far[2].clone(),
        hist.state(t - params.xi),
    ];
    let mut chi = DVector::zeros(15 * n);
    for (b, v) in blocks.iter().enumerate() {
        chi.rows_mut(b * n, n).copy_from(v);
    }
    Ok(chi)
}

/// `V(t) = V1 + … + V5` for the decision matrices `vars`.
pub fn evaluate_lkf<H: StateHistory + ?Sized>(
    vars: &LmiVariables,
    hist: &H,
    sys: &DelayedNNSystem,
    params: &TheoremParams,
    t: f64,
) -> Result<f64> {
    let n = sys.dim();
    if vars.n != n || hist.dim() != n {
        return Err(Error::DimensionMismatch(
            "variables, history and system disagree".into(),
        ));
    }
    let (h, k, xi) = (params.h, params.k, params.xi);
    let ht = check_window(hist, t, h)?;
    let r = hist.state(t);
    let full = averages(hist, t - h, t)?;
    let get = |v| vars.get(v);

    let mut delta = DVector::zeros(3 * n);
    delta.rows_mut(0, n).copy_from(&r);
    delta.rows_mut(n, n).copy_from(&(&full[0] * h));
    delta.rows_mut(2 * n, n).copy_from(&(&full[1] * h));
    let gi = sys.g_integral(&r);
    let d1 = get(Var::D1);
    let d2 = get(Var::D2);
    let mut sector_part = 0.0;
    for j in 0..n {
        let lin = 0.5 * sys.sector[j] * r[j] * r[j] - gi[j];
        sector_part += 2.0 * (d1[(j, j)] * gi[j] + d2[(j, j)] * lin);
    }
    let v1 = (2.0 * k * t).exp() * (quad_form(get(Var::P), &delta) + sector_part);

    let q = get(Var::Q);
    let z134 = get(Var::Z1) + get(Var::Z3) + get(Var::Z4);
    let e2kh = (2.0 * k * h).exp();
    let pts = pieces(hist, t - h, t, &[t - ht, t - xi]);
    let integral = quadrature().integrate_vec_pieces(
        |s, out| {
            let rs = hist.state(s);
            let dr = hist.derivative(s);
            let w = (2.0 * k * s).exp();
            let sig = s - t;
            let mut v2 = quad_form(get(Var::U1), &rs);
            if s >= t - ht {
                let mut eps = DVector::zeros(2 * n);
                eps.rows_mut(0, n).copy_from(&rs);
                eps.rows_mut(n, n).copy_from(&sys.g(&rs));
                v2 += quad_form(q, &eps);
            }
            v2 += if s >= t - xi {
                quad_form(get(Var::U2), &rs)
            } else {
                quad_form(get(Var::U3), &rs)
            };
            let v3 = h * (sig + h) * (quad_form(&z134, &dr) + quad_form(get(Var::Z2), &rs));
            let v4 = 0.5 * (sig + h) * (sig + h) * quad_form(get(Var::N1), &dr)
                + 0.5 * (h * h - sig * sig) * quad_form(get(Var::N2), &dr);
            out[0] = w * (e2kh * v2 + v3 + v4);
        },
        1,
        &pts,
    )?[0];

    let frac = ht / h;
    let v5 = (2.0 * k * t).exp()
        * (frac * quad_form(get(Var::M1), &r) + (1.0 - frac) * quad_form(get(Var::M2), &r));
    Ok(v1 + integral + v5)
}
