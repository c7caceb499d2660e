//! Equilibrium theory of the mean-field transverse-field ferromagnet.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::transfer::Chain;

const SCAN_POINTS: usize = 10_000;
const ROOT_TOL: f64 = 1e-12;

/// `tanh(z)/z`, continuous at 0.
pub fn tanhc(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z * z / 3.0
    } else {
        z.tanh() / z
    }
}

/// `log(2 cosh z)` without overflow.
pub fn log_2cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumRoot {
    pub m: f64,
    pub f: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub roots: Vec<EquilibriumRoot>,
    /// Index into `roots` of the free-energy minimizer.
    pub physical: usize,
}

impl EquilibriumResult {
    pub fn m(&self) -> f64 {
        self.roots[self.physical].m
    }

    pub fn f(&self) -> f64 {
        self.roots[self.physical].f
    }

    pub fn residual(&self) -> f64 {
        self.roots[self.physical].residual
    }
}

/// Right side minus left side of the self-consistency equation,
/// `(h + J0 m) tanh(beta R)/R - m` with `R = sqrt((h + J0 m)^2 + gamma^2)`.
pub fn self_consistency(m: f64, params: &ModelParams) -> f64 {
    let a = params.h + params.j0 * m;
    let r = a.hypot(params.gamma);
    a * params.beta * tanhc(params.beta * r) - m
}

/// `f(m) = J0 m^2 / 2 - log(2 cosh(beta R)) / beta`.
pub fn free_energy(m: f64, params: &ModelParams) -> f64 {
    let a = params.h + params.j0 * m;
    let r = a.hypot(params.gamma);
    0.5 * params.j0 * m * m - log_2cosh(params.beta * r) / params.beta
}

pub fn solve_m(params: &ModelParams) -> EquilibriumResult {
    let g = |m: f64| self_consistency(m, params);
    let grid = |j: usize| -1.0 + 2.0 * j as f64 / SCAN_POINTS as f64;
    let mut found: Vec<f64> = Vec::new();
    let push = |m: f64, found: &mut Vec<f64>| {
        if found.last().is_none_or(|&p| (m - p).abs() > 1e-9) {
            found.push(m);
        }
    };
    let mut prev = (grid(0), g(grid(0)));
    if prev.1 == 0.0 {
        push(prev.0, &mut found);
    }
    for j in 1..=SCAN_POINTS {
        let m = grid(j);
        let gm = g(m);
        if gm == 0.0 {
            push(m, &mut found);
        } else if prev.1 != 0.0 && prev.1.signum() != gm.signum() {
            push(bisect(&g, prev.0, m, prev.1), &mut found);
        }
        prev = (m, gm);
    }
    let roots: Vec<EquilibriumRoot> = found
        .into_iter()
        .map(|m| EquilibriumRoot { m, f: free_energy(m, params), residual: g(m).abs() })
        .collect();
    let physical = roots
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f))
        .map(|(i, _)| i)
        .unwrap_or(0);
    EquilibriumResult { roots, physical }
}

fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64) -> f64 {
    while (b - a).abs() > ROOT_TOL {
        let mid = 0.5 * (a + b);
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if gm.signum() == ga.signum() {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Exact free energy density of non-interacting spins,
/// `-log(2 cosh(beta sqrt(gamma^2 + h^2)))/beta` (or with `h = 0`).
pub fn free_energy_noninteracting(params: &ModelParams, with_h: bool) -> f64 {
    let field = if with_h { params.gamma.hypot(params.h) } else { params.gamma };
    -log_2cosh(params.beta * field) / params.beta
}

/// `log Z_M / N` of the Trotter representation of non-interacting spins in a
/// transverse field, evaluated in log space:
/// `(M/2) log(sinh(2 beta gamma/M)/2) + log(lambda_+^M + lambda_-^M)` with
/// `lambda_+ = 2 cosh B`, `lambda_- = 2 sinh B`.
pub fn partition_noninteracting_trotter(slices: usize, beta: f64, gamma: f64) -> Result<f64> {
    if slices < 2 {
        return Err(Error::invalid(format!("need M >= 2, got {slices}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::domain("gamma = 0 leaves the Trotter coupling B undefined"));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be > 0, got {beta}")));
    }
    let mf = slices as f64;
    let a = beta * gamma / mf;
    // w = e^{-2B} = tanh(a)
    let w = a.tanh();
    let b = -0.5 * w.ln();
    let log_half_sinh = a.sinh().ln() + a.cosh().ln();
    let log_lp = b + w.ln_1p();
    let log_tanh_b = (-w).ln_1p() - w.ln_1p();
    Ok(0.5 * mf * log_half_sinh + mf * log_lp + (mf * log_tanh_b).exp().ln_1p())
}

/// Chain parameters of the Trotter-symmetric saddle at magnetization `m`:
/// `x = beta (h + J0 m)/M`, `y = B`.
pub fn ansatz_xy(params: &ModelParams, m: f64) -> (f64, f64) {
    (params.beta * (params.h + params.j0 * m) / params.slices as f64, params.b())
}

/// Finite-M magnetization `Tr[sigma^z K^M(m)] / Tr[K^M(m)]` of the symmetric saddle.
pub fn finite_m_magnetization(params: &ModelParams, m: f64) -> f64 {
    let (x, y) = ansatz_xy(params, m);
    Chain::new(x, y).m1(params.slices)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub a: Vec<f64>,
    pub max_criterion: f64,
    pub symmetric_stable: bool,
}

/// Eigenvalues of the Trotter-slice covariance matrix
/// `A_qr = <s_q s_r> - <s_q><s_r>` at the symmetric saddle. `A` is circulant, so
/// for `k > 1`
/// `a_k = |s_{+-}|^2 (1 - phi^M)(1 - phi^2) / ((1 + phi^M)(1 + phi^2 - 2 phi cos(2 pi (k-1)/M)))`;
/// the uniform mode `k = 1` also carries `M (s_{++}^2 - <s>^2)`.
pub fn toeplitz_spectrum(params: &ModelParams, m: f64) -> BifurcationReport {
    let mm = params.slices;
    let mf = mm as f64;
    let (x, y) = ansatz_xy(params, m);
    let a: Vec<f64> = if !params.has_finite_bonds() {
        vec![0.0; mm]
    } else {
        let c = Chain::new(x, y);
        let phi = c.phi();
        let (pm, one_minus_pm) = c.pow(mf);
        let pref = c.offdiag2() / (1.0 + pm) * one_minus_pm * (1.0 - phi * phi);
        let m1 = c.m1(mm);
        let uniform = mf * (c.s2() - m1 * m1);
        (0..mm)
            .map(|k| {
                let cos = (2.0 * std::f64::consts::PI * k as f64 / mf).cos();
                let ak = pref / (1.0 + phi * phi - 2.0 * phi * cos);
                if k == 0 {
                    ak + uniform
                } else {
                    ak
                }
            })
            .collect()
    };
    let max_criterion = a.iter().map(|ak| params.beta * params.j0 * ak / mf).fold(f64::NEG_INFINITY, f64::max);
    BifurcationReport { a, max_criterion, symmetric_stable: max_criterion < 1.0 }
}
