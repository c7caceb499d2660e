//! Periodic Ising chains `Z = sum_s exp(sum_k x_k s_k + y_k s_k s_{k+1})`
//! solved exactly through 2x2 transfer matrices.
//!
//! The homogeneous chain uses the closed-form eigensystem of
//! `K = [[e^{y+x}, e^{-y}], [e^{-y}, e^{y-x}]]`; everything is evaluated in
//! terms of `q = e^{-4y}` and `log|phi|` so that the Trotter scaling
//! `x ~ 1/M`, `e^{-2y} ~ 1/M` with `M` in the thousands stays accurate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigensystem {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub phi: f64,
    pub v_plus: [f64; 2],
    pub v_minus: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainMoments {
    pub m1: f64,
    pub c12: f64,
    pub c13: f64,
    pub log_z: f64,
    pub phi: f64,
}

/// Homogeneous chain in the `(x, q = e^{-4y})` parametrization.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Chain {
    /// `log lambda_+`
    pub log_lp: f64,
    pub sh: f64,
    pub q: f64,
    pub r: f64,
    pub log_abs_phi: f64,
    /// -1, 0 or 1
    pub phi_sign: f64,
}

impl Chain {
    pub fn new(x: f64, y: f64) -> Self {
        let q = (-4.0 * y).exp();
        Self::from_q(x, q, y)
    }

    /// `y` is only used for `log lambda_+`; pass `-q.ln()/4` if unknown.
    pub fn from_q(x: f64, q: f64, y: f64) -> Self {
        let sh = x.sinh();
        let r = sh.hypot(q.sqrt());
        let half = (0.5 * x).sinh();
        // log(cosh x + r) without cancellation for small x and r
        let log_den = (2.0 * half * half + r).ln_1p();
        let (log_num, phi_sign) = if q < 1.0 {
            ((-q).ln_1p(), 1.0)
        } else if q > 1.0 {
            ((q - 1.0).ln(), -1.0)
        } else {
            (f64::NEG_INFINITY, 0.0)
        };
        Chain {
            log_lp: y + log_den,
            sh,
            q,
            r,
            log_abs_phi: log_num - 2.0 * log_den,
            phi_sign,
        }
    }

    pub fn phi(&self) -> f64 {
        self.phi_sign * self.log_abs_phi.exp()
    }

    /// `(phi^n, 1 - phi^n)` with the difference free of cancellation.
    pub fn pow(&self, n: f64) -> (f64, f64) {
        if n == 0.0 {
            return (1.0, 0.0);
        }
        if self.phi_sign == 0.0 {
            return (0.0, 1.0);
        }
        let l = n * self.log_abs_phi;
        let odd = self.phi_sign < 0.0 && (n as i64) % 2 != 0;
        if odd {
            let p = -l.exp();
            (p, 1.0 - p)
        } else {
            (l.exp(), -l.exp_m1())
        }
    }

    /// `sinh^2 x / r^2`, the squared diagonal element of sigma^z.
    pub fn s2(&self) -> f64 {
        let s = self.sh / self.r;
        s * s
    }

    /// `e^{-4y} / r^2`, the squared off-diagonal element of sigma^z.
    pub fn offdiag2(&self) -> f64 {
        self.q / (self.r * self.r)
    }

    pub fn m1(&self, m: usize) -> f64 {
        if self.r == 0.0 {
            return 0.0;
        }
        let (pm, one_minus) = self.pow(m as f64);
        self.sh / self.r * one_minus / (1.0 + pm)
    }

    /// `1 - <s_1 s_{1+a}>` on a ring of `m` sites.
    pub fn one_minus_corr(&self, a: usize, m: usize) -> f64 {
        let (pm, _) = self.pow(m as f64);
        let (_, da) = self.pow(a as f64);
        let (_, db) = self.pow((m - a) as f64);
        self.offdiag2() * da * db / (1.0 + pm)
    }

    pub fn corr(&self, a: usize, m: usize) -> f64 {
        let (pm, _) = self.pow(m as f64);
        let (pa, _) = self.pow(a as f64);
        let (pb, _) = self.pow((m - a) as f64);
        self.s2() + self.offdiag2() * (pa + pb) / (1.0 + pm)
    }

    pub fn log_z(&self, m: usize) -> f64 {
        let (pm, _) = self.pow(m as f64);
        m as f64 * self.log_lp + pm.ln_1p()
    }
}

/// Closed-form eigenvalues and normalized eigenvectors of the transfer matrix.
pub fn eigensystem(x: f64, y: f64) -> Eigensystem {
    let c = Chain::new(x, y);
    let ey = y.exp();
    let lambda_plus = c.log_lp.exp();
    let lambda_minus = -ey * (-4.0 * y).exp_m1() / (x.cosh() + c.r);
    let e2 = (-2.0 * y).exp();
    // r - sinh x, rewritten when sinh x > 0 to avoid cancellation
    let d = if c.sh > 0.0 { c.q / (c.r + c.sh) } else { c.r - c.sh };
    let len = e2.hypot(d);
    Eigensystem {
        lambda_plus,
        lambda_minus,
        phi: c.phi(),
        v_plus: [e2 / len, d / len],
        v_minus: [d / len, -e2 / len],
    }
}

fn check_len(m: usize) -> Result<()> {
    if m < 3 {
        return Err(Error::invalid(format!("chain length must be >= 3, got {m}")));
    }
    Ok(())
}

pub fn moments(x: f64, y: f64, m: usize) -> Result<ChainMoments> {
    check_len(m)?;
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::invalid("chain parameters must be finite"));
    }
    let c = Chain::new(x, y);
    Ok(ChainMoments {
        m1: c.m1(m),
        c12: c.corr(1, m),
        c13: c.corr(2, m),
        log_z: c.log_z(m),
        phi: c.phi(),
    })
}

/// Exact `Xi_l(u, v)`: the distance-`l` correlator of a ring of `M` sites at
/// `x = u/M`, `e^{-2y} = v/M`.
pub fn xi_exact(u: f64, v: f64, m: usize, ell: usize) -> f64 {
    let mf = m as f64;
    let q = (v / mf) * (v / mf);
    let c = Chain::from_q(u / mf, q, -0.25 * q.ln());
    let sh2 = c.sh * c.sh;
    let a = ((0.5 * mf - ell as f64) * c.log_abs_phi).abs();
    let b = (0.5 * mf * c.log_abs_phi).abs();
    // cosh(a)/cosh(b) without overflow
    let ratio = (a - b).exp() * (1.0 + (-2.0 * a).exp()) / (1.0 + (-2.0 * b).exp());
    (sh2 + q * ratio) / (sh2 + q)
}

/// Second-order large-`M` expansion of [`xi_exact`].
pub fn xi_expansion(u: f64, v: f64, m: usize, ell: usize) -> f64 {
    let mf = m as f64;
    let l = ell as f64;
    let r = u.hypot(v);
    let tr = if r == 0.0 { 1.0 } else { r.tanh() / r };
    1.0 - 2.0 * l * v * v / mf * tr + 2.0 * l * l * v * v / (mf * mf)
}

/// Moments of a heterogeneous periodic chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroMoments {
    /// `<s_q>`
    pub m: Vec<f64>,
    /// `<s_q s_{q+1}>`
    pub bond: Vec<f64>,
    /// `<s_{q-1} s_{q+1}>`
    pub next: Vec<f64>,
    pub log_z: f64,
}

type Mat = [[f64; 2]; 2];

const IDENTITY: Mat = [[1.0, 0.0], [0.0, 1.0]];

#[inline]
fn mul(a: &Mat, b: &Mat) -> Mat {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Right multiplication by `diag(1, -1)`.
#[inline]
fn d_right(a: &Mat) -> Mat {
    [[a[0][0], -a[0][1]], [a[1][0], -a[1][1]]]
}

#[inline]
fn trace(a: &Mat) -> f64 {
    a[0][0] + a[1][1]
}

/// Matrix with a separate log-scale: value = `mat * exp(log_scale)`.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    mat: Mat,
    log_scale: f64,
}

impl Scaled {
    const ONE: Scaled = Scaled { mat: IDENTITY, log_scale: 0.0 };

    fn times(&self, other: &Scaled) -> Scaled {
        let mut mat = mul(&self.mat, &other.mat);
        let norm = mat.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for v in mat.iter_mut().flatten() {
            *v /= norm;
        }
        Scaled { mat, log_scale: self.log_scale + other.log_scale + norm.ln() }
    }
}

/// `T[s, s'] = exp(x s + y s s')` with the largest entry factored out.
fn site_matrix(x: f64, y: f64) -> Scaled {
    let top = x.abs() + y.abs();
    let e = |s: f64, t: f64| (x * s + y * s * t - top).exp();
    Scaled { mat: [[e(1.0, 1.0), e(1.0, -1.0)], [e(-1.0, 1.0), e(-1.0, -1.0)]], log_scale: top }
}

/// Exact moments of `sum_s exp(sum_q x_q s_q + y_q s_q s_{q+1})`, periodic in `q`,
/// via prefix/suffix transfer-matrix products (O(M)).
pub fn hetero_moments(xs: &[f64], ys: &[f64]) -> Result<HeteroMoments> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!("xs has {} entries, ys has {}", xs.len(), ys.len())));
    }
    let m = xs.len();
    check_len(m)?;
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("chain parameters must be finite"));
    }
    let t: Vec<Scaled> = xs.iter().zip(ys).map(|(&x, &y)| site_matrix(x, y)).collect();
    // pre[a] = T_0 ... T_{a-1}; suf[b] = T_b ... T_{M-1}
    let mut pre = Vec::with_capacity(m + 1);
    pre.push(Scaled::ONE);
    for q in 0..m {
        let next = pre[q].times(&t[q]);
        pre.push(next);
    }
    let mut suf = vec![Scaled::ONE; m + 1];
    for q in (0..m).rev() {
        suf[q] = t[q].times(&suf[q + 1]);
    }
    let z = &pre[m];
    let log_z = z.log_scale + trace(&z.mat).ln();

    let ratio = |mat: Mat, log_scale: f64| trace(&mat) * (log_scale - log_z).exp();

    // <s_a> = Tr(pre[a] D suf[a]) / Z
    let mag: Vec<f64> = (0..m)
        .map(|a| ratio(mul(&d_right(&pre[a].mat), &suf[a].mat), pre[a].log_scale + suf[a].log_scale))
        .collect();

    // <s_a s_b>, a < b: Tr(pre[a] D T_a..T_{b-1} D suf[b]) / Z, with the
    // middle segment given explicitly.
    let pair = |a: usize, b: usize, mid: &Scaled| {
        let left = d_right(&pre[a].mat);
        let inner = d_right(&mul(&left, &mid.mat));
        ratio(mul(&inner, &suf[b].mat), pre[a].log_scale + mid.log_scale + suf[b].log_scale)
    };

    let mut bond = Vec::with_capacity(m);
    for q in 0..m - 1 {
        bond.push(pair(q, q + 1, &t[q]));
    }
    // sites 0 and M-1: middle is T_0..T_{M-2} = pre[M-1]
    bond.push(pair(0, m - 1, &pre[m - 1]));

    let mut next = vec![0.0; m];
    // q = 0 pairs sites M-1 and 1: middle T_1..T_{M-2}
    let mut mid = Scaled::ONE;
    for tq in &t[1..m - 1] {
        mid = mid.times(tq);
    }
    next[0] = pair(1, m - 1, &mid);
    for q in 1..m - 1 {
        next[q] = pair(q - 1, q + 1, &t[q - 1].times(&t[q]));
    }
    // q = M-1 pairs sites M-2 and 0: middle T_0..T_{M-3} = pre[M-2]
    next[m - 1] = pair(0, m - 2, &pre[m - 2]);

    Ok(HeteroMoments { m: mag, bond, next, log_z })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Exhaustive enumeration over all 2^M chain states.
    pub(crate) struct Enumerated {
        pub m: Vec<f64>,
        pub bond: Vec<f64>,
        pub next: Vec<f64>,
        pub log_z: f64,
    }

    pub(crate) fn enumerate(xs: &[f64], ys: &[f64]) -> Enumerated {
        let m = xs.len();
        let mut weights = Vec::with_capacity(1 << m);
        let mut max_e = f64::NEG_INFINITY;
        for bits in 0u32..(1 << m) {
            let s = |k: usize| if bits >> (k % m) & 1 == 1 { 1.0 } else { -1.0 };
            let e: f64 = (0..m).map(|k| xs[k] * s(k) + ys[k] * s(k) * s(k + 1)).sum();
            max_e = max_e.max(e);
            weights.push(e);
        }
        let mut z = 0.0;
        let mut mag = vec![0.0; m];
        let mut bond = vec![0.0; m];
        let mut next = vec![0.0; m];
        for (bits, e) in weights.iter().enumerate() {
            let w = (e - max_e).exp();
            let s = |k: usize| if bits >> (k % m) & 1 == 1 { 1.0 } else { -1.0 };
            z += w;
            for k in 0..m {
                mag[k] += w * s(k);
                bond[k] += w * s(k) * s(k + 1);
                next[k] += w * s(k + m - 1) * s(k + 1);
            }
        }
        for v in mag.iter_mut().chain(bond.iter_mut()).chain(next.iter_mut()) {
            *v /= z;
        }
        Enumerated { m: mag, bond, next, log_z: max_e + z.ln() }
    }

    /// Small xorshift so parameter draws are reproducible without an RNG dep.
    pub(crate) struct Draw(u64);

    impl Draw {
        pub fn new(seed: u64) -> Self {
            Draw(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) | 1)
        }

        pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
            self.0 ^= self.0 << 13;
            self.0 ^= self.0 >> 7;
            self.0 ^= self.0 << 17;
            lo + (hi - lo) * ((self.0 >> 11) as f64 / (1u64 << 53) as f64)
        }
    }

    #[test]
    fn eigenvalues_at_zero_field() {
        let b = 0.8;
        let e = eigensystem(0.0, b);
        assert!((e.lambda_plus - 2.0 * b.cosh()).abs() < 1e-14);
        assert!((e.lambda_minus - 2.0 * b.sinh()).abs() < 1e-14);
        assert!((e.phi - b.tanh()).abs() < 1e-15);
        let far = eigensystem(0.0, 15.0).phi;
        assert!(far < 1.0 && far > 1.0 - 1e-12);
    }

    #[test]
    fn eigen_matches_characteristic_polynomial() {
        let mut d = Draw::new(5);
        for _ in 0..200 {
            let x = d.uniform(-3.0, 3.0);
            let y = d.uniform(-2.0, 3.0);
            let (a, b, c) = ((y + x).exp(), (-y).exp(), (y - x).exp());
            let tr = a + c;
            let det = a * c - b * b;
            let disc = (tr * tr / 4.0 - det).sqrt();
            let (lp, lm) = (tr / 2.0 + disc, tr / 2.0 - disc);
            let e = eigensystem(x, y);
            assert!((e.lambda_plus - lp).abs() < 1e-12 * lp);
            assert!((e.lambda_minus - lm).abs() < 1e-12 * lp);
            assert!((e.phi - e.lambda_minus / e.lambda_plus).abs() < 1e-12);
            for (v, l) in [(e.v_plus, e.lambda_plus), (e.v_minus, e.lambda_minus)] {
                assert!((v[0].hypot(v[1]) - 1.0).abs() < 1e-14);
                assert!((a * v[0] + b * v[1] - l * v[0]).abs() < 1e-10 * lp);
                assert!((b * v[0] + c * v[1] - l * v[1]).abs() < 1e-10 * lp);
            }
        }
    }

    #[test]
    fn zero_field_is_unmagnetized() {
        for m in [3, 4, 7, 50] {
            assert_eq!(moments(0.0, 0.7, m).unwrap().m1, 0.0);
        }
    }

    #[test]
    fn four_site_zero_field_correlator() {
        let l = 1f64.tanh().ln();
        let expected = l.cosh() / (2.0 * l).cosh();
        let got = moments(0.0, 1.0, 4).unwrap().c12;
        let e = enumerate(&[0.0; 4], &[1.0; 4]);
        assert!((got - expected).abs() < 1e-14);
        assert!((got - e.bond[0]).abs() < 1e-14);
    }

    #[test]
    fn moments_match_enumeration() {
        let mut d = Draw::new(17);
        for trial in 0..100 {
            let m = 3 + trial % 10;
            let x = d.uniform(-2.0, 2.0);
            let y = d.uniform(-1.5, 2.5);
            let got = moments(x, y, m).unwrap();
            let e = enumerate(&vec![x; m], &vec![y; m]);
            assert!((got.m1 - e.m[0]).abs() < 1e-10, "m1 {x} {y} {m}");
            assert!((got.c12 - e.bond[0]).abs() < 1e-10, "c12 {x} {y} {m}");
            assert!((got.c13 - e.next[1]).abs() < 1e-10, "c13 {x} {y} {m}");
            assert!((got.log_z - e.log_z).abs() < 1e-10, "logZ {x} {y} {m}");
        }
    }

    #[test]
    fn rejects_short_chains() {
        assert!(matches!(moments(0.1, 0.1, 2), Err(Error::InvalidArgument(_))));
        assert!(hetero_moments(&[0.0; 3], &[0.0; 4]).is_err());
    }

    #[test]
    fn log_z_stable_at_large_m() {
        let m = 10_000;
        let y = crate::params::trotter_coupling(2.0, 0.5, m);
        let c = Chain::new(0.0, y);
        let got = moments(0.0, y, m).unwrap();
        assert!(got.log_z.is_finite());
        let (pm, _) = c.pow(m as f64);
        let expected = m as f64 * c.log_lp + pm.ln_1p();
        assert_eq!(got.log_z, expected);
        let e = eigensystem(0.0, y);
        assert!((c.log_lp - e.lambda_plus.ln()).abs() < 1e-13);
    }

    #[test]
    fn one_minus_corr_consistent() {
        let c = Chain::new(0.01, 3.0);
        for a in 1..5 {
            assert!((1.0 - c.corr(a, 100) - c.one_minus_corr(a, 100)).abs() < 1e-14);
        }
    }

    #[test]
    fn hetero_matches_enumeration() {
        let mut d = Draw::new(23);
        for trial in 0..60 {
            let m = 3 + trial % 8;
            let xs: Vec<f64> = (0..m).map(|_| d.uniform(-2.0, 2.0)).collect();
            let ys: Vec<f64> = (0..m).map(|_| d.uniform(-1.0, 2.0)).collect();
            let got = hetero_moments(&xs, &ys).unwrap();
            let e = enumerate(&xs, &ys);
            assert!((got.log_z - e.log_z).abs() < 1e-10);
            for q in 0..m {
                assert!((got.m[q] - e.m[q]).abs() < 1e-10);
                assert!((got.bond[q] - e.bond[q]).abs() < 1e-10);
                assert!((got.next[q] - e.next[q]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hetero_reduces_to_homogeneous() {
        let (x, y, m) = (0.03, 2.2, 40);
        let h = hetero_moments(&vec![x; m], &vec![y; m]).unwrap();
        let c = moments(x, y, m).unwrap();
        for q in 0..m {
            assert!((h.m[q] - c.m1).abs() < 1e-12);
            assert!((h.bond[q] - c.c12).abs() < 1e-12);
            assert!((h.next[q] - c.c13).abs() < 1e-12);
        }
        assert!((h.log_z - c.log_z).abs() < 1e-10);
    }

    #[test]
    fn hetero_long_chain_is_finite() {
        let m = 100_000;
        let h = hetero_moments(&vec![0.001; m], &vec![4.0; m]).unwrap();
        assert!(h.log_z.is_finite());
        assert!(h.m.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pinned_site() {
        let mut xs = vec![0.0; 6];
        xs[2] = 1e3;
        let h = hetero_moments(&xs, &[0.5; 6]).unwrap();
        assert!((h.m[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xi_trivial_and_expansion() {
        assert_eq!(xi_exact(1.0, 1.0, 100, 0), 1.0);
        assert_eq!(xi_expansion(1.0, 1.0, 100, 0), 1.0);
        let diff = |m| (xi_exact(0.0, 1.0, m, 1) - xi_expansion(0.0, 1.0, m, 1)).abs();
        let (d1, d2, d3) = (diff(100), diff(200), diff(400));
        assert!((d1 / d2 - 8.0).abs() < 1.0 && (d2 / d3 - 8.0).abs() < 1.0, "{d1} {d2} {d3}");
        assert!((xi_exact(1.0, 1.0, 192, 2) - xi_expansion(1.0, 1.0, 192, 2)).abs() < 1e-5);
    }

    #[test]
    fn xi_matches_moments() {
        let (u, v, m) = (0.7, 1.3, 64);
        let y = -0.5 * (v / m as f64).ln();
        let mo = moments(u / m as f64, y, m).unwrap();
        assert!((xi_exact(u, v, m, 1) - mo.c12).abs() < 1e-13);
        assert!((xi_exact(u, v, m, 2) - mo.c13).abs() < 1e-13);
    }
}
