//! Fixed-step simulation of the shifted delayed network, decay-rate fits,
//! and CSV / SVG export of trajectories.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inequality::{ScalarFn, TestFunction};
use crate::lmi::StateHistory;
use crate::system::DelayedNNSystem;

/// Norm above which a run is declared unstable.
pub const BLOW_UP_NORM: f64 = 1e12;
/// Norms at or below this count as numerical zero in decay fits.
pub const ZERO_NORM: f64 = 1e-280;

/// The time-varying delay `h(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelaySignal {
    Constant {
        value: f64,
    },
    /// `mean + amplitude·sin(frequency·t)`.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Piecewise linear through `(times[i], values[i])`, held constant outside.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl DelaySignal {
    pub fn constant(value: f64) -> Self {
        DelaySignal::Constant { value }
    }

    pub fn sinusoid(mean: f64, amplitude: f64, frequency: f64) -> Self {
        DelaySignal::Sinusoid {
            mean,
            amplitude,
            frequency,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::OutOfRange(m));
        match self {
            DelaySignal::Constant { value } if !(value.is_finite() && *value >= 0.0) => bad(
                format!("constant delay {value} must be finite and non-negative"),
            ),
            DelaySignal::Sinusoid {
                mean,
                amplitude,
                frequency,
            } => {
                if !(mean.is_finite() && amplitude.is_finite() && frequency.is_finite()) {
                    bad("sinusoidal delay parameters must be finite".into())
                } else if mean - amplitude.abs() < 0.0 {
                    bad(format!("delay {mean} ± {amplitude} becomes negative"))
                } else {
                    Ok(())
                }
            }
            DelaySignal::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    bad("delay table needs matching, non-empty time and value columns".into())
                } else if times.windows(2).any(|w| !(w[1] > w[0])) {
                    bad("delay table times must be strictly increasing".into())
                } else if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    bad("delay table values must be finite and non-negative".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn segment(times: &[f64], t: f64) -> Option<usize> {
        if times.len() < 2 || t <= times[0] || t >= times[times.len() - 1] {
            return None;
        }
        Some(times.partition_point(|s| *s <= t) - 1)
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            DelaySignal::Constant { value } => *value,
            DelaySignal::Sinusoid {
                mean,
                amplitude,
                frequency,
            } => mean + amplitude * (frequency * t).sin(),
            DelaySignal::Table { times, values } => match Self::segment(times, t) {
                Some(i) => {
                    let w = (t - times[i]) / (times[i + 1] - times[i]);
                    values[i] + w * (values[i + 1] - values[i])
                }
                None if t <= times[0] => values[0],
                None => values[values.len() - 1],
            },
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            DelaySignal::Constant { .. } => 0.0,
            DelaySignal::Sinusoid {
                amplitude,
                frequency,
                ..
            } => amplitude * frequency * (frequency * t).cos(),
            DelaySignal::Table { times, values } => match Self::segment(times, t) {
                Some(i) => (values[i + 1] - values[i]) / (times[i + 1] - times[i]),
                None => 0.0,
            },
        }
    }

    pub fn max_delay(&self) -> f64 {
        match self {
            DelaySignal::Constant { value } => *value,
            DelaySignal::Sinusoid {
                mean, amplitude, ..
            } => mean + amplitude.abs(),
            DelaySignal::Table { values, .. } => values.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn min_delay(&self) -> f64 {
        match self {
            DelaySignal::Constant { value } => *value,
            DelaySignal::Sinusoid {
                mean, amplitude, ..
            } => mean - amplitude.abs(),
            DelaySignal::Table { values, .. } => {
                values.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Bound on `|ḣ(t)|`.
    pub fn max_rate(&self) -> f64 {
        match self {
            DelaySignal::Constant { .. } => 0.0,
            DelaySignal::Sinusoid {
                amplitude,
                frequency,
                ..
            } => (amplitude * frequency).abs(),
            DelaySignal::Table { times, values } => times
                .windows(2)
                .zip(values.windows(2))
                .map(|(t, v)| ((v[1] - v[0]) / (t[1] - t[0])).abs())
                .fold(0.0, f64::max),
        }
    }

    pub fn default_step(&self) -> f64 {
        self.max_delay() / 200.0
    }
}

/// `φ(s)` for `s ≤ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialHistory {
    /// Constant extension of `r(0)`.
    Constant {
        value: Vec<f64>,
    },
    Function {
        function: TestFunction,
    },
}

impl InitialHistory {
    pub fn constant(value: &[f64]) -> Self {
        InitialHistory::Constant {
            value: value.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialHistory::Constant { value } => value.len(),
            InitialHistory::Function { function } => function.dim(),
        }
    }

    pub fn state(&self, s: f64) -> DVector<f64> {
        match self {
            InitialHistory::Constant { value } => DVector::from_column_slice(value),
            InitialHistory::Function { function } => function.eval(s),
        }
    }

    pub fn derivative(&self, s: f64) -> DVector<f64> {
        match self {
            InitialHistory::Constant { value } => DVector::zeros(value.len()),
            InitialHistory::Function { function } => function.derivative().eval(s),
        }
    }

    /// `sup ‖φ(s)‖` on `[-h, 0]`, sampled.
    pub fn sup_norm(&self, h: f64) -> f64 {
        match self {
            InitialHistory::Constant { value } => DVector::from_column_slice(value).norm(),
            InitialHistory::Function { function } => (0..=400)
                .map(|i| function.eval(-h * i as f64 / 400.0).norm())
                .fold(0.0, f64::max),
        }
    }

    /// Each component is `c + a·sin(ω s + p)` with `|c| ≤ 1`, `a ≤ 0.5`, `ω ∈ [0.5, 3]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Self {
        let components = (0..n)
            .map(|_| {
                ScalarFn::Sum(vec![
                    ScalarFn::constant(rng.gen_range(-1.0..1.0)),
                    ScalarFn::Sinusoid {
                        amplitude: rng.gen_range(0.0..0.5),
                        frequency: rng.gen_range(0.5..3.0),
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    },
                ])
            })
            .collect();
        InitialHistory::Function {
            function: TestFunction::new(components),
        }
    }
}

/// States on a uniform grid `t_i = i·step`, `i = 0..=N`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub step: f64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `ṙ(t_i)`, used for Hermite interpolation.
    pub derivatives: Vec<DVector<f64>>,
    pub delays: Vec<f64>,
    pub delay: DelaySignal,
    pub history: InitialHistory,
}

fn hermite(t: f64, t0: f64, dt: f64, y: [&DVector<f64>; 2], f: [&DVector<f64>; 2]) -> DVector<f64> {
    let s = (t - t0) / dt;
    let s2 = s * s;
    let s3 = s2 * s;
    y[0] * (2.0 * s3 - 3.0 * s2 + 1.0)
        + f[0] * (dt * (s3 - 2.0 * s2 + s))
        + y[1] * (3.0 * s2 - 2.0 * s3)
        + f[1] * (dt * (s3 - s2))
}

fn hermite_slope(
    t: f64,
    t0: f64,
    dt: f64,
    y: [&DVector<f64>; 2],
    f: [&DVector<f64>; 2],
) -> DVector<f64> {
    let s = (t - t0) / dt;
    let s2 = s * s;
    (y[1] - y[0]) * ((6.0 * s - 6.0 * s2) / dt)
        + f[0] * (3.0 * s2 - 4.0 * s + 1.0)
        + f[1] * (3.0 * s2 - 2.0 * s)
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    fn interval(&self, t: f64) -> usize {
        let last = self.times.len().saturating_sub(2);
        ((t / self.step).floor().max(0.0) as usize).min(last)
    }

    fn eval_with(&self, t: f64, slope: bool) -> DVector<f64> {
        if t <= 0.0 || self.times.len() < 2 {
            return if slope {
                self.history.derivative(t.min(0.0))
            } else {
                self.history.state(t.min(0.0))
            };
        }
        let i = self.interval(t);
        let y = [&self.states[i], &self.states[i + 1]];
        let f = [&self.derivatives[i], &self.derivatives[i + 1]];
        if slope {
            hermite_slope(t, self.times[i], self.step, y, f)
        } else {
            hermite(t, self.times[i], self.step, y, f)
        }
    }

    /// Writes `t, r1..rn, h` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.history.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|j| format!("r{j}")));
        header.push("h".into());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&header).map_err(io)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t}")];
            row.extend(self.states[i].iter().map(|v| format!("{v:e}")));
            row.push(format!("{}", self.delays[i]));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }

    /// Largest `‖r‖` in consecutive windows of length `width` starting at 0.
    pub fn window_maxima(&self, width: f64) -> Vec<f64> {
        let count = (self.final_time() / width).floor() as usize;
        let mut out = vec![0.0f64; count];
        for (t, r) in self.times.iter().zip(&self.states) {
            let j = (t / width) as usize;
            if j < count {
                out[j] = out[j].max(r.norm());
            }
        }
        out
    }

    /// Largest sector violation over the grid samples.
    pub fn sector_violation(&self, sys: &DelayedNNSystem) -> f64 {
        self.states
            .iter()
            .map(|r| sys.sector_violation(r))
            .fold(0.0, f64::max)
    }

    /// A line plot of every component against time.
    pub fn to_svg(&self, title: &str) -> String {
        let (width, height, pad) = (720.0, 420.0, 50.0);
        let t_end = self.final_time().max(f64::MIN_POSITIVE);
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for r in &self.states {
            for v in r.iter() {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        if hi - lo < 1e-12 {
            hi += 1.0;
            lo -= 1.0;
        }
        let x = |t: f64| pad + (width - 2.0 * pad) * t / t_end;
        let y = |v: f64| height - pad - (height - 2.0 * pad) * (v - lo) / (hi - lo);
        let colors = [
            "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
        ];
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="25" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            width / 2.0,
            escape(title)
        );
        let _ = writeln!(
            s,
            r#"<g stroke="black" stroke-width="1"><line x1="{pad}" y1="{0}" x2="{1}" y2="{0}"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{0}"/></g>"#,
            height - pad,
            width - pad
        );
        if lo < 0.0 && hi > 0.0 {
            let _ = writeln!(
                s,
                r##"<line x1="{pad}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#bbbbbb" stroke-dasharray="4 4"/>"##,
                y(0.0),
                width - pad
            );
        }
        for i in 0..=5 {
            let t = t_end * i as f64 / 5.0;
            let v = lo + (hi - lo) * i as f64 / 5.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
                x(t),
                height - pad + 16.0,
                short(t)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
                pad - 6.0,
                y(v) + 4.0,
                short(v)
            );
        }
        let stride = (self.len() / 2000).max(1);
        for j in 0..self.history.dim() {
            let pts: Vec<String> = self
                .times
                .iter()
                .zip(&self.states)
                .step_by(stride)
                .map(|(t, r)| format!("{:.2},{:.2}", x(*t), y(r[j])))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                colors[j % colors.len()],
                pts.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{}">r{}</text>"#,
                width - pad + 8.0,
                pad + 16.0 * j as f64,
                colors[j % colors.len()],
                j + 1
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn short(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl StateHistory for Trajectory {
    fn dim(&self) -> usize {
        self.history.dim()
    }

    fn earliest(&self) -> f64 {
        -self.delay.max_delay()
    }

    fn latest(&self) -> f64 {
        self.final_time()
    }

    fn state(&self, t: f64) -> DVector<f64> {
        self.eval_with(t, false)
    }

    fn derivative(&self, t: f64) -> DVector<f64> {
        self.eval_with(t, true)
    }

    fn delay(&self, t: f64) -> f64 {
        self.delay.value(t)
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let lo = (a.max(0.0) / self.step).floor() as usize;
        let hi = ((b.min(self.final_time()) / self.step).ceil() as usize).min(self.len());
        (lo..hi)
            .map(|i| self.times[i])
            .filter(|t| *t > a && *t < b)
            .collect()
    }
}

/// Integrates the shifted model with the classical four-stage scheme.
///
/// Delayed states come from `history` for non-positive arguments and from
/// cubic Hermite interpolation of the computed grid otherwise. `step` defaults
/// to `h_max/200`.
pub fn simulate(
    sys: &DelayedNNSystem,
    delay: &DelaySignal,
    history: &InitialHistory,
    horizon: f64,
    step: Option<f64>,
) -> Result<Trajectory> {
    sys.validate()?;
    delay.validate()?;
    let n = sys.dim();
    if history.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "history has {} components, system has {n}",
            history.dim()
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::OutOfRange(format!(
            "horizon {horizon} must be positive"
        )));
    }
    let dt = match step {
        Some(s) => s,
        None if delay.max_delay() > 0.0 => delay.default_step(),
        None => horizon / 1000.0,
    };
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::OutOfRange(format!("step {dt} must be positive")));
    }
    let h_min = delay.min_delay();
    if h_min > 0.0 && dt > h_min / 4.0 * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "step {dt} exceeds a quarter of the minimum delay {h_min}"
        )));
    }
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;

    let mut traj = Trajectory {
        step: dt,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        derivatives: Vec::with_capacity(steps + 1),
        delays: Vec::with_capacity(steps + 1),
        delay: delay.clone(),
        history: history.clone(),
    };

    let lagged = |traj: &Trajectory, t: f64, stage: &DVector<f64>, n_last: usize| {
        let tau = t - delay.value(t);
        if tau <= 0.0 {
            return history.state(tau);
        }
        let t_last = traj.times[n_last];
        if tau <= t_last && n_last > 0 {
            let i = ((tau / dt).floor() as usize).min(n_last - 1);
            let y = [&traj.states[i], &traj.states[i + 1]];
            let f = [&traj.derivatives[i], &traj.derivatives[i + 1]];
            hermite(tau, traj.times[i], dt, y, f)
        } else if tau <= t_last {
            traj.states[0].clone()
        } else {
            // the delayed point lies inside the current step
            let w = (tau - t_last) / (t - t_last).max(f64::MIN_POSITIVE);
            &traj.states[n_last] * (1.0 - w) + stage * w
        }
    };

    let r0 = history.state(0.0);
    traj.times.push(0.0);
    traj.delays.push(delay.value(0.0));
    traj.states.push(r0.clone());
    let rd0 = lagged(&traj, 0.0, &r0, 0);
    traj.derivatives.push(sys.rhs(&r0, &rd0));

    for i in 0..steps {
        let t = i as f64 * dt;
        let r = traj.states[i].clone();
        let k1 = traj.derivatives[i].clone();
        let y2 = &r + &k1 * (0.5 * dt);
        let k2 = sys.rhs(&y2, &lagged(&traj, t + 0.5 * dt, &y2, i));
        let y3 = &r + &k2 * (0.5 * dt);
        let k3 = sys.rhs(&y3, &lagged(&traj, t + 0.5 * dt, &y3, i));
        let y4 = &r + &k3 * dt;
        let k4 = sys.rhs(&y4, &lagged(&traj, t + dt, &y4, i));
        let next = r + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
        let t_next = (i + 1) as f64 * dt;
        let norm = next.norm();
        if !(norm <= BLOW_UP_NORM) {
            return Err(Error::BlowUp { t: t_next, norm });
        }
        traj.times.push(t_next);
        traj.delays.push(delay.value(t_next));
        traj.states.push(next.clone());
        let rd = lagged(&traj, t_next, &next, i + 1);
        traj.derivatives.push(sys.rhs(&next, &rd));
    }
    Ok(traj)
}

/// Least-squares fit `ln‖r(t)‖ ≈ ln C − k̂ t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    /// `C` in `‖r(t)‖ ≈ C e^{−k̂ t}`.
    pub constant: f64,
    pub window: (f64, f64),
    /// Set when the window was cut short because `‖r‖` reached numerical zero.
    pub shrunk: bool,
    pub samples: usize,
}

/// Fits the decay rate of `‖r(t)‖` over the grid points in `[t_a, t_b]`.
pub fn estimate_decay_rate(traj: &Trajectory, window: (f64, f64)) -> Result<DecayFit> {
    let (ta, tb) = window;
    if !(ta < tb) {
        return Err(Error::OutOfRange(format!("empty fit window [{ta}, {tb}]")));
    }
    let mut pts = vec![];
    let mut shrunk = false;
    let mut end = tb;
    for (t, r) in traj.times.iter().zip(&traj.states) {
        if *t < ta - 1e-12 || *t > tb + 1e-12 {
            continue;
        }
        let norm = r.norm();
        if norm <= ZERO_NORM {
            shrunk = true;
            end = *t;
            break;
        }
        pts.push((*t, norm.ln()));
    }
    if pts.len() < 2 {
        return Err(if shrunk {
            Error::ZeroTrajectory(ta)
        } else {
            Error::OutOfRange(format!("fewer than two samples in [{ta}, {tb}]"))
        });
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(DecayFit {
        rate: -slope,
        constant: (ym - slope * tm).exp(),
        window: (ta, if shrunk { end } else { tb }),
        shrunk,
        samples: pts.len(),
    })
}
