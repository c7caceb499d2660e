//! Closed macroscopic flows and a fixed-step RK4 integrator.
//!
//! For the finite-M kinds [`rhs`] returns `tau * d/dt` of the state; for the
//! slow kinds it returns `dm/dt` on the `tau = 1/M^2` clock. [`integrate`]
//! converts both to simulation time using `params.tau`.

use serde::{Deserialize, Serialize};

use crate::closure::{solve_u, solve_xy_from, solve_xy_hetero_from, ClosureSolution};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::transfer::Chain;

pub const CLOSURE_TOL: f64 = 1e-13;
pub const CLOSURE_MAX_ITER: usize = 100;
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Noninteracting,
    Fields,
    Ferro,
    FerroSlice,
    Slow,
    SlowApprox,
}

impl FlowKind {
    pub fn dim(&self, slices: usize) -> usize {
        match self {
            FlowKind::Noninteracting | FlowKind::Fields | FlowKind::Ferro => 2,
            FlowKind::FerroSlice => 2 * slices,
            FlowKind::Slow | FlowKind::SlowApprox => 1,
        }
    }

    pub fn is_slow(&self) -> bool {
        matches!(self, FlowKind::Slow | FlowKind::SlowApprox)
    }

    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Noninteracting => "noninteracting",
            FlowKind::Fields => "fields",
            FlowKind::Ferro => "ferro",
            FlowKind::FerroSlice => "ferro_slice",
            FlowKind::Slow => "slow",
            FlowKind::SlowApprox => "slow_approx",
        }
    }
}

impl std::str::FromStr for FlowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "noninteracting" => FlowKind::Noninteracting,
            "fields" => FlowKind::Fields,
            "ferro" => FlowKind::Ferro,
            "ferro_slice" => FlowKind::FerroSlice,
            "slow" => FlowKind::Slow,
            "slow_approx" => FlowKind::SlowApprox,
            other => return Err(Error::invalid(format!("unknown flow kind '{other}'"))),
        })
    }
}

/// `Q_+- = 1/2 [tanh(a + 2B) +- tanh(a - 2B)]` with `a = beta (J0 m + h)/M`.
pub fn q_pm(m: f64, params: &ModelParams) -> (f64, f64) {
    let a = params.beta * (params.j0 * m + params.h) / params.slices as f64;
    let (qp, qm, _) = q_terms(a, params.bond_weight());
    (qp, qm)
}

/// `(Q_+, Q_-, 1 - Q_-)` at field argument `a`, with `t = tanh(beta gamma / M) = e^{-2B}`.
fn q_terms(a: f64, t: f64) -> (f64, f64, f64) {
    let w = t * t;
    if w == 0.0 {
        return (0.0, 1.0, 0.0);
    }
    // divide through by cosh(2a) to keep large arguments finite
    let (ch, th) = ((2.0 * a).cosh(), (2.0 * a).tanh());
    if ch.is_finite() {
        let den = 1.0 + w * w + 2.0 * w * ch;
        (2.0 * w * (2.0 * a).sinh() / den, (1.0 - w * w) / den, 2.0 * w * (w + ch) / den)
    } else {
        (th, 0.0, 1.0)
    }
}

/// Diagnostics of the closure used at one right-hand-side evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowDiagnostics {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub c: Option<f64>,
    pub u: Option<f64>,
    pub branch_count: Option<usize>,
    pub residual: f64,
}

/// Right-hand side evaluator that warm-starts each closure solve from the
/// previous one.
#[derive(Debug, Clone)]
pub struct FlowRhs {
    pub kind: FlowKind,
    pub params: ModelParams,
    warm: Option<(f64, f64)>,
    warm_hetero: Option<(Vec<f64>, Vec<f64>)>,
    pub last: FlowDiagnostics,
}

impl FlowRhs {
    pub fn new(kind: FlowKind, params: &ModelParams) -> Result<Self> {
        if kind != FlowKind::Slow && kind != FlowKind::SlowApprox && !params.has_finite_bonds() {
            return Err(Error::domain("finite-M flows need gamma > 0"));
        }
        if kind.is_slow() && !(params.gamma > 0.0) {
            return Err(Error::domain("slow flow needs beta*gamma > 0"));
        }
        Ok(FlowRhs { kind, params: params.clone(), warm: None, warm_hetero: None, last: FlowDiagnostics::default() })
    }

    fn check_dim(&self, state: &[f64]) -> Result<()> {
        let dim = self.kind.dim(self.params.slices);
        if state.len() != dim {
            return Err(Error::contract(format!(
                "{} flow expects a state of dimension {dim}, got {}",
                self.kind.name(),
                state.len()
            )));
        }
        Ok(())
    }

    /// `C` and `1 - C` at `(m, eps)`; `eps = 1` is the slice-replicated limit.
    fn closure(&mut self, m: f64, eps: f64) -> Result<(f64, f64)> {
        let slices = self.params.slices;
        if eps >= 1.0 {
            self.last = FlowDiagnostics { x: None, y: Some(f64::INFINITY), c: Some(1.0), ..Default::default() };
            return Ok((1.0, 0.0));
        }
        let sol: ClosureSolution = solve_xy_from(m, eps, slices, CLOSURE_TOL, CLOSURE_MAX_ITER, self.warm)?;
        self.warm = Some((sol.x, sol.y));
        let one_minus = Chain::new(sol.x, sol.y).one_minus_corr(2, slices);
        self.last = FlowDiagnostics {
            x: Some(sol.x),
            y: Some(sol.y),
            c: Some(sol.c),
            residual: sol.residual,
            ..Default::default()
        };
        Ok((sol.c, one_minus))
    }

    pub fn eval(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(state)?;
        let p = self.params.clone();
        let mf = p.slices as f64;
        let t = p.bond_weight();
        match self.kind {
            FlowKind::Noninteracting => {
                let (m, eps) = (state[0], state[1]);
                let (c, _) = self.closure(m, eps)?;
                let (_, qm, one_minus_qm) = q_terms(0.0, t);
                Ok(vec![-m * one_minus_qm, (1.0 + c) * qm - 2.0 * eps])
            }
            FlowKind::Fields => {
                let (m, eps) = (state[0], state[1]);
                let (c, omc) = self.closure(m, eps)?;
                let a = p.beta * p.h / mf;
                let (qp, qm, omq) = q_terms(a, t);
                Ok(vec![
                    0.5 * omc * a.tanh() + 0.5 * qp * (1.0 + c) - m * omq,
                    (1.0 + c) * qm + 2.0 * qp * m - 2.0 * eps,
                ])
            }
            FlowKind::Ferro => {
                let (m, eps) = (state[0], state[1]);
                let (c, omc) = self.closure(m, eps)?;
                let a = p.beta * (p.h + p.j0 * m) / mf;
                let (qp, qm, omq) = q_terms(a, t);
                Ok(vec![
                    0.5 * (1.0 + c) * qp - m * omq + 0.5 * omc * a.tanh(),
                    2.0 * m * qp + (1.0 + c) * qm - 2.0 * eps,
                ])
            }
            FlowKind::FerroSlice => self.eval_slices(state),
            FlowKind::Slow | FlowKind::SlowApprox => {
                let m = state[0];
                let v = p.beta * p.gamma;
                let u = if self.kind == FlowKind::Slow {
                    let root = solve_u(m, v, 1e-15)?;
                    self.last = FlowDiagnostics {
                        u: Some(root.u),
                        branch_count: Some(root.branch_count),
                        residual: root.residual,
                        ..Default::default()
                    };
                    root.u
                } else {
                    let u = p.beta * (p.j0 * m + p.h);
                    self.last = FlowDiagnostics { u: Some(u), ..Default::default() };
                    u
                };
                let r = u.hypot(v);
                let field = p.beta * (p.h + p.j0 * m);
                Ok(vec![2.0 * v * v * (field * crate::statics::tanhc(r) - m)])
            }
        }
    }

    fn eval_slices(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        let p = &self.params;
        let n = p.slices;
        let mf = n as f64;
        let t = p.bond_weight();
        let (m, eps) = state.split_at(n);
        let guess = self.warm_hetero.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice()));
        let (c, omc): (Vec<f64>, Vec<f64>) = if eps.iter().all(|&e| e >= 1.0) {
            self.last = FlowDiagnostics { y: Some(f64::INFINITY), c: Some(1.0), ..Default::default() };
            (vec![1.0; n], vec![0.0; n])
        } else {
            let sol = solve_xy_hetero_from(m, eps, CLOSURE_TOL, CLOSURE_MAX_ITER, guess)?;
            let omc = sol.c.iter().map(|c| 1.0 - c).collect();
            self.last = FlowDiagnostics {
                x: Some(sol.xs.iter().sum::<f64>() / mf),
                y: Some(sol.ys.iter().sum::<f64>() / mf),
                c: Some(sol.c.iter().sum::<f64>() / mf),
                residual: sol.residual,
                ..Default::default()
            };
            let c = sol.c.clone();
            self.warm_hetero = Some((sol.xs, sol.ys));
            (c, omc)
        };
        let a: Vec<f64> = m.iter().map(|&mq| p.beta * (p.h + p.j0 * mq) / mf).collect();
        let q: Vec<(f64, f64, f64)> = a.iter().map(|&aq| q_terms(aq, t)).collect();
        let at = |v: &[f64], k: isize| v[k.rem_euclid(n as isize) as usize];
        let mut out = vec![0.0; 2 * n];
        for qi in 0..n {
            let k = qi as isize;
            let (qp, qm, _) = q[qi];
            let (qp1, qm1, _) = q[(qi + 1) % n];
            let (mp, mm, mpp) = (at(m, k + 1), at(m, k - 1), at(m, k + 2));
            let c1 = at(&c, k + 1);
            out[qi] = 0.5 * (1.0 + c[qi]) * qp + 0.5 * (mp + mm) * qm - m[qi] + 0.5 * omc[qi] * a[qi].tanh();
            out[n + qi] = 0.5 * (mp + mm) * qp
                + 0.5 * (1.0 + c[qi]) * qm
                + 0.5 * (m[qi] + mpp) * qp1
                + 0.5 * (1.0 + c1) * qm1
                + 0.5 * (mp - mm) * a[qi].tanh()
                + 0.5 * (m[qi] - mpp) * at(&a, k + 1).tanh()
                - 2.0 * eps[qi];
        }
        Ok(out)
    }
}

/// One-shot right-hand side (cold-started closure).
pub fn rhs(kind: FlowKind, state: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    FlowRhs::new(kind, params)?.eval(state)
}

/// Solves the `eps` equation of a two-dimensional kind for its fixed point at
/// fixed `m`, returning `(eps, rhs)` there.
pub fn relax_eps(kind: FlowKind, m: f64, params: &ModelParams) -> Result<(f64, Vec<f64>)> {
    if kind.dim(params.slices) != 2 || kind == FlowKind::FerroSlice {
        return Err(Error::invalid("relax_eps needs a two-dimensional flow kind"));
    }
    let mut f = FlowRhs::new(kind, params)?;
    let mut lo = (2.0 * m.abs() - 1.0).max(-1.0) + 1e-9;
    let mut hi = 1.0 - 1e-15;
    let mut g_lo = f.eval(&[m, lo])?[1];
    if g_lo <= 0.0 {
        return Err(Error::domain("eps equation has no interior fixed point at this m"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let g = f.eval(&[m, mid])?[1];
        if g == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if g.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
        }
    }
    let eps = 0.5 * (lo + hi);
    let out = f.eval(&[m, eps])?;
    Ok((eps, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub t: f64,
    pub state: Vec<f64>,
    pub m: f64,
    pub e: f64,
    pub eps: f64,
    pub diag: FlowDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub kind: FlowKind,
    pub params: ModelParams,
    pub dt: f64,
    pub records: Vec<FlowRecord>,
    pub advisories: Vec<String>,
}

impl FlowTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn magnetization(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.m).collect()
    }

    pub fn last(&self) -> &FlowRecord {
        self.records.last().expect("trajectory has at least the initial record")
    }
}

fn summarize(kind: FlowKind, state: &[f64], params: &ModelParams, diag: &FlowDiagnostics) -> (f64, f64, f64) {
    let half_j = 0.5 * params.j0;
    match kind {
        FlowKind::FerroSlice => {
            let n = params.slices;
            let mf = n as f64;
            let m = state[..n].iter().sum::<f64>() / mf;
            let e = -half_j * state[..n].iter().map(|v| v * v).sum::<f64>() / mf;
            (m, e, state[n..].iter().sum::<f64>() / mf)
        }
        FlowKind::Slow | FlowKind::SlowApprox => {
            let m = state[0];
            let v = params.beta * params.gamma;
            let r = diag.u.unwrap_or(0.0).hypot(v);
            let eps = 1.0 - 2.0 * v * v * crate::statics::tanhc(r) / params.slices as f64;
            (m, -half_j * m * m, eps)
        }
        _ => (state[0], -half_j * state[0] * state[0], state[1]),
    }
}

/// Classical RK4 from `t = 0` to `t_end`, recording every step.
pub fn integrate(kind: FlowKind, y0: &[f64], params: &ModelParams, t_end: f64, dt: f64) -> Result<FlowTrajectory> {
    integrate_recorded(kind, y0, params, t_end, dt, None)
}

/// Like [`integrate`], recording only every `record_dt` (plus the endpoint).
pub fn integrate_recorded(
    kind: FlowKind,
    y0: &[f64],
    params: &ModelParams,
    t_end: f64,
    dt: f64,
    record_dt: Option<f64>,
) -> Result<FlowTrajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!("t_end must be > 0, got {t_end}")));
    }
    let mut f = FlowRhs::new(kind, params)?;
    f.check_dim(y0)?;
    check_bounds(y0, 0.0)?;
    let scale = if kind.is_slow() {
        1.0 / (params.tau * params.slices as f64 * params.slices as f64)
    } else {
        1.0 / params.tau
    };
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let record_every = record_dt.map(|r| ((r / h).round() as usize).max(1)).unwrap_or(1);

    let mut traj = FlowTrajectory { kind, params: params.clone(), dt: h, records: Vec::new(), advisories: Vec::new() };
    let mut y = y0.to_vec();
    let k0 = match f.eval(&y) {
        Ok(k) => k,
        Err(e) => return Err(Error::Flow { t: 0.0, partial: Box::new(traj), source: Box::new(e) }),
    };
    push_record(&mut traj, 0.0, &y, &f.last);
    let mut k1 = k0;
    let mut last_sign = 0.0;
    let mut flips = 0;
    for step in 1..=steps {
        let t = (step - 1) as f64 * h;
        let result = rk4_step(&mut f, &y, &k1, h * scale);
        let next = match result.and_then(|y| check_bounds(&y, t + h).map(|_| y)) {
            Ok(v) => v,
            Err(e) => return Err(Error::Flow { t, partial: Box::new(traj), source: Box::new(e) }),
        };
        let dm = next[0] - y[0];
        let sign = if dm > 0.0 { 1.0 } else if dm < 0.0 { -1.0 } else { 0.0 };
        if sign != 0.0 && last_sign != 0.0 && sign != last_sign {
            flips += 1;
        } else if sign != 0.0 {
            flips = 0;
        }
        if sign != 0.0 {
            last_sign = sign;
        }
        if flips == 3 && traj.advisories.is_empty() {
            traj.advisories.push(format!(
                "sign oscillation of dm near t = {:.6}; step size {h} may be too large",
                t + h
            ));
        }
        y = next;
        k1 = match f.eval(&y) {
            Ok(k) => k,
            Err(e) => return Err(Error::Flow { t: t + h, partial: Box::new(traj), source: Box::new(e) }),
        };
        if step % record_every == 0 || step == steps {
            push_record(&mut traj, step as f64 * h, &y, &f.last);
        }
    }
    Ok(traj)
}

fn push_record(traj: &mut FlowTrajectory, t: f64, y: &[f64], diag: &FlowDiagnostics) {
    let (m, e, eps) = summarize(traj.kind, y, &traj.params, diag);
    traj.records.push(FlowRecord { t, state: y.to_vec(), m, e, eps, diag: *diag });
}

fn check_bounds(y: &[f64], t: f64) -> Result<()> {
    if let Some(v) = y.iter().find(|v| !(v.abs() <= 1.0 + BOUND_SLACK)) {
        return Err(Error::domain(format!("state component {v} left [-1, 1] at t = {t}")));
    }
    Ok(())
}

fn rk4_step(f: &mut FlowRhs, y: &[f64], k1: &[f64], h: f64) -> Result<Vec<f64>> {
    let shift = |k: &[f64], c: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    let k2 = f.eval(&clamp_eps(f.kind, shift(k1, 0.5 * h), f.params.slices))?;
    let k3 = f.eval(&clamp_eps(f.kind, shift(&k2, 0.5 * h), f.params.slices))?;
    let k4 = f.eval(&clamp_eps(f.kind, shift(&k3, h), f.params.slices))?;
    Ok(y.iter()
        .enumerate()
        .map(|(i, v)| v + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Stage states may overshoot `eps = 1` by rounding; pin them to the boundary.
fn clamp_eps(kind: FlowKind, mut y: Vec<f64>, slices: usize) -> Vec<f64> {
    let range = match kind {
        FlowKind::FerroSlice => slices..2 * slices,
        FlowKind::Slow | FlowKind::SlowApprox => return y,
        _ => 1..2,
    };
    for v in &mut y[range] {
        if *v > 1.0 && *v <= 1.0 + BOUND_SLACK {
            *v = 1.0;
        }
    }
    y
}
