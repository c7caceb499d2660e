//! Inversion of the maximum-entropy closure: from macroscopic targets back to
//! the chain parameters whose moments reproduce them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::transfer::{hetero_moments, Chain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureSolution {
    pub x: f64,
    pub y: f64,
    /// Next-nearest correlator `<s_1 s_3>`.
    pub c: f64,
    pub residual: f64,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroSolution {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `C_k = <s_{k-1} s_{k+1}>`
    pub c: Vec<f64>,
    pub residual: f64,
    pub iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct URoot {
    pub u: f64,
    pub branch_count: usize,
    pub residual: f64,
}

pub(crate) fn check_feasible(m: f64, eps: f64) -> Result<()> {
    if !(m.abs() < 1.0) {
        return Err(Error::domain(format!("closure target m = {m} violates |m| < 1")));
    }
    if !(eps.abs() < 1.0) {
        return Err(Error::domain(format!("closure target eps = {eps} violates |eps| < 1")));
    }
    if eps < 2.0 * m.abs() - 1.0 {
        return Err(Error::domain(format!(
            "closure target (m, eps) = ({m}, {eps}) violates eps >= 2|m| - 1"
        )));
    }
    Ok(())
}

/// `log Z(x, y)` of the homogeneous ring as a jet in `(x, y)`.
fn log_z_jet(x: f64, y: f64, m: usize) -> Jet2 {
    let mf = m as f64;
    let (xj, yj) = (Jet2::var_x(x), Jet2::var_y(y));
    let q = yj.scale(-4.0).exp();
    let sh = xj.sinh();
    let r = (sh.square() + q).sqrt();
    let half = xj.scale(0.5).sinh();
    let den = (half.square().scale(2.0) + r).ln_1p();
    let log_lp = yj + den;
    let mut log_z = log_lp.scale(mf);
    if y != 0.0 {
        let (log_num, sign) = if y > 0.0 {
            ((-q).ln_1p(), 1.0)
        } else {
            (yj.scale(-4.0).exp_m1().ln(), if m % 2 == 0 { 1.0 } else { -1.0 })
        };
        let pm = (log_num - den.scale(2.0)).scale(mf).exp().scale(sign);
        log_z = log_z + pm.ln_1p();
    }
    log_z
}

/// `(m1, c12)` and their Jacobian with respect to `(x, y)`.
fn moments_and_jacobian(x: f64, y: f64, m: usize) -> ([f64; 2], [[f64; 2]; 2]) {
    let j = log_z_jet(x, y, m);
    let mf = m as f64;
    (
        [j.dx / mf, j.dy / mf],
        [[j.dxx / mf, j.dxy / mf], [j.dxy / mf, j.dyy / mf]],
    )
}

fn closed_form(x: f64, y: f64, m: usize) -> [f64; 2] {
    let c = Chain::new(x, y);
    [c.m1(m), c.corr(1, m)]
}

fn fd_jacobian(x: f64, y: f64, m: usize) -> [[f64; 2]; 2] {
    let h = 1e-6;
    let fx = (closed_form(x + h, y, m), closed_form(x - h, y, m));
    let fy = (closed_form(x, y + h, m), closed_form(x, y - h, m));
    let mut jac = [[0.0; 2]; 2];
    for i in 0..2 {
        jac[i][0] = (fx.0[i] - fx.1[i]) / (2.0 * h);
        jac[i][1] = (fy.0[i] - fy.1[i]) / (2.0 * h);
    }
    jac
}

fn solve2(j: [[f64; 2]; 2], f: [f64; 2]) -> Option<[f64; 2]> {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if !det.is_finite() || det == 0.0 {
        return None;
    }
    let dx = (-f[0] * j[1][1] + f[1] * j[0][1]) / det;
    let dy = (-f[1] * j[0][0] + f[0] * j[1][0]) / det;
    (dx.is_finite() && dy.is_finite()).then_some([dx, dy])
}

/// Infinite-ring inversion, used as the Newton starting point.
pub fn initial_guess(m: f64, eps: f64) -> (f64, f64) {
    let phi = ((eps - m * m) / (1.0 - m * m)).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    let y = phi.atanh();
    let x = (m * (-2.0 * y).exp() / (1.0 - m * m).sqrt()).asinh();
    (x, y)
}

/// Finds `(x, y)` with `m1(x, y, M) = m` and `c12(x, y, M) = eps`.
pub fn solve_xy(m: f64, eps: f64, slices: usize, tol: f64, max_iter: usize) -> Result<ClosureSolution> {
    solve_xy_from(m, eps, slices, tol, max_iter, None)
}

/// [`solve_xy`] starting Newton from `guess` when given.
pub fn solve_xy_from(
    m: f64,
    eps: f64,
    slices: usize,
    tol: f64,
    max_iter: usize,
    guess: Option<(f64, f64)>,
) -> Result<ClosureSolution> {
    if slices < 3 {
        return Err(Error::invalid(format!("chain length must be >= 3, got {slices}")));
    }
    check_feasible(m, eps)?;
    let residual_at = |x: f64, y: f64| {
        let v = closed_form(x, y, slices);
        let f = [v[0] - m, v[1] - eps];
        (f, f[0].abs().max(f[1].abs()))
    };
    let (mut x, mut y) = guess
        .filter(|g| g.0.is_finite() && g.1.is_finite())
        .unwrap_or_else(|| initial_guess(m, eps));
    let (mut f, mut res) = residual_at(x, y);
    if !res.is_finite() {
        (x, y) = initial_guess(m, eps);
        (f, res) = residual_at(x, y);
    }
    let mut iters = 0;
    while !(res <= tol) {
        if iters >= max_iter {
            return Err(Error::NoConvergence { what: "solve_xy", iters, residual: res });
        }
        iters += 1;
        let (_, jac) = moments_and_jacobian(x, y, slices);
        let step = solve2(jac, f).or_else(|| solve2(fd_jacobian(x, y, slices), f));
        let Some(step) = step else {
            return Err(Error::NoConvergence { what: "solve_xy", iters, residual: res });
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let (nx, ny) = (x + lambda * step[0], y + lambda * step[1]);
            let (nf, nres) = residual_at(nx, ny);
            if nres.is_finite() && nres < res {
                (x, y, f, res) = (nx, ny, nf, nres);
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            if res <= 10.0 * tol.max(f64::EPSILON) {
                break;
            }
            return Err(Error::NoConvergence { what: "solve_xy", iters, residual: res });
        }
    }
    let c = Chain::new(x, y).corr(2, slices);
    Ok(ClosureSolution { x, y, c, residual: res, iters })
}

/// Heterogeneous closure: `m_q = <s_q>` and `eps_q = <s_q s_{q+1}>` for every
/// slice of a periodic chain with site fields `x_q` and bonds `y_q`.
pub fn solve_xy_hetero(m: &[f64], eps: &[f64], tol: f64, max_iter: usize) -> Result<HeteroSolution> {
    solve_xy_hetero_from(m, eps, tol, max_iter, None)
}

pub fn solve_xy_hetero_from(
    m: &[f64],
    eps: &[f64],
    tol: f64,
    max_iter: usize,
    guess: Option<(&[f64], &[f64])>,
) -> Result<HeteroSolution> {
    let n = m.len();
    if eps.len() != n {
        return Err(Error::invalid(format!("m has {} entries, eps has {}", n, eps.len())));
    }
    if n < 3 {
        return Err(Error::invalid(format!("chain length must be >= 3, got {n}")));
    }
    for q in 0..n {
        check_feasible(m[q], eps[q]).map_err(|e| Error::domain(format!("slice {q}: {e}")))?;
    }
    let mut z = DVector::zeros(2 * n);
    match guess {
        Some((xs, ys)) if xs.len() == n && ys.len() == n => {
            for q in 0..n {
                z[q] = xs[q];
                z[n + q] = ys[q];
            }
        }
        _ => {
            for q in 0..n {
                let s = solve_xy(m[q], eps[q], n, 1e-12, 100)
                    .map(|s| (s.x, s.y))
                    .unwrap_or_else(|_| initial_guess(m[q], eps[q]));
                z[q] = s.0;
                z[n + q] = s.1;
            }
        }
    }
    let eval = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let h = hetero_moments(&z.as_slice()[..n], &z.as_slice()[n..])?;
        let mut f = DVector::zeros(2 * n);
        for q in 0..n {
            f[q] = h.m[q] - m[q];
            f[n + q] = h.bond[q] - eps[q];
        }
        Ok(f)
    };
    let norm = |f: &DVector<f64>| f.amax();
    let mut f = eval(&z)?;
    let mut res = norm(&f);
    let mut iters = 0;
    while !(res <= tol) {
        if iters >= max_iter {
            return Err(Error::NoConvergence { what: "solve_xy_hetero", iters, residual: res });
        }
        iters += 1;
        let h = 1e-6;
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..2 * n {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let col = (eval(&zp)? - eval(&zm)?) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let Some(step) = jac.lu().solve(&(-&f)) else {
            return Err(Error::NoConvergence { what: "solve_xy_hetero", iters, residual: res });
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let nz = &z + &step * lambda;
            if let Ok(nf) = eval(&nz) {
                let nres = norm(&nf);
                if nres.is_finite() && nres < res {
                    (z, f, res) = (nz, nf, nres);
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            if res <= 10.0 * tol.max(f64::EPSILON) {
                break;
            }
            return Err(Error::NoConvergence { what: "solve_xy_hetero", iters, residual: res });
        }
    }
    let xs = z.as_slice()[..n].to_vec();
    let ys = z.as_slice()[n..].to_vec();
    let c = hetero_moments(&xs, &ys)?.next;
    Ok(HeteroSolution { xs, ys, c, residual: res, iters })
}

/// `u tanh(sqrt(u^2 + b^2)) / sqrt(u^2 + b^2)`.
pub fn u_response(u: f64, b: f64) -> f64 {
    let r = u.hypot(b);
    if r == 0.0 {
        return 0.0;
    }
    u * r.tanh() / r
}

/// Roots of `u tanh(sqrt(u^2+b^2))/sqrt(u^2+b^2) = m` on `|u| <= max(50, 20 b)`;
/// returns the one with the largest `|u|`.
pub fn solve_u(m: f64, betagamma: f64, tol: f64) -> Result<URoot> {
    if !(m.abs() < 1.0) {
        return Err(Error::domain(format!("|m| = {} must be < 1", m.abs())));
    }
    if !(betagamma > 0.0 && betagamma.is_finite()) {
        return Err(Error::invalid(format!("beta*gamma must be > 0, got {betagamma}")));
    }
    let g = |u: f64| u_response(u, betagamma) - m;
    let u_max = 50f64.max(20.0 * betagamma);
    let per_side = 200;
    let lo = 1e-8 * u_max;
    let mut grid = Vec::with_capacity(2 * per_side + 1);
    for k in (0..per_side).rev() {
        grid.push(-lo * (u_max / lo).powf(k as f64 / (per_side - 1) as f64));
    }
    grid.push(0.0);
    for k in 0..per_side {
        grid.push(lo * (u_max / lo).powf(k as f64 / (per_side - 1) as f64));
    }

    let mut roots = Vec::new();
    let mut prev = (grid[0], g(grid[0]));
    for &u in &grid[1..] {
        let gu = g(u);
        if gu == 0.0 {
            roots.push(u);
        } else if prev.1 != 0.0 && prev.1.signum() != gu.signum() {
            roots.push(bisect(&g, prev.0, u, prev.1, tol));
        }
        prev = (u, gu);
    }
    if roots.is_empty() {
        return Err(Error::domain(format!(
            "no root of the u-equation for m = {m}, beta*gamma = {betagamma} within |u| <= {u_max}"
        )));
    }
    let best = roots.iter().copied().fold(0.0f64, |acc, u| {
        if u.abs() > acc.abs() || (u.abs() == acc.abs() && u > acc) {
            u
        } else {
            acc
        }
    });
    Ok(URoot { u: best, branch_count: roots.len(), residual: g(best).abs() })
}

fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 || gm.abs() < tol && (b - a).abs() < tol {
            return mid;
        }
        if gm.signum() == ga.signum() {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
    }
    let (ga, gb) = (g(a).abs(), g(b).abs());
    if ga <= gb {
        a
    } else {
        b
    }
}
