//! The N x M Trotter lattice: Hamiltonian, local fields, Glauber rates,
//! macroscopic observables and their single-flip susceptibilities.
//!
//! Spins live in slice-major order (`k * N + i`). The slice sums
//! `S_k = sum_i s_ik` and bond sums `W_k = sum_i s_ik s_i,k+1` are cached and
//! updated on every flip, so all observables and local fields are O(1) or
//! O(M) to evaluate. [`TrotterConfig::audit`] recomputes them from scratch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// |beta * h_ik| beyond which the Glauber rate is taken as exactly 0 or 1.
pub const TANH_CLAMP: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrotterConfig {
    sites: usize,
    slices: usize,
    spins: Vec<i8>,
    slice_sums: Vec<i64>,
    bond_sums: Vec<i64>,
}

/// Slice-resolved observables `m_k`, `E_k`, and Trotter bond energies `eps_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceObservables {
    pub m: Vec<f64>,
    pub e: Vec<f64>,
    pub eps: Vec<f64>,
}

/// Slice-averaged observables `(m, E, eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AvgObservables {
    pub m: f64,
    pub e: f64,
    pub eps: f64,
}

/// Integer tallies behind the averaged observables:
/// `magnet = sum_k S_k`, `pairs = sum_k sum_{i<j} s_ik s_jk`, `bonds = sum_k W_k`.
///
/// Every observable is one of these divided by a fixed normalization, so
/// flip susceptibilities can be checked without rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ObservableCounts {
    pub magnet: i64,
    pub pairs: i64,
    pub bonds: i64,
}

impl ObservableCounts {
    pub fn to_avg(self, params: &ModelParams) -> AvgObservables {
        let n = params.sites as f64;
        let nm = (params.sites * params.slices) as f64;
        AvgObservables {
            m: self.magnet as f64 / nm,
            e: -params.j0 * self.pairs as f64 / (n * nm),
            eps: self.bonds as f64 / nm,
        }
    }
}

impl std::ops::Sub for ObservableCounts {
    type Output = ObservableCounts;

    fn sub(self, rhs: Self) -> Self {
        ObservableCounts {
            magnet: self.magnet - rhs.magnet,
            pairs: self.pairs - rhs.pairs,
            bonds: self.bonds - rhs.bonds,
        }
    }
}

impl TrotterConfig {
    /// Builds a configuration from slice-major spins (`spins[k * sites + i]`).
    pub fn new(sites: usize, slices: usize, spins: Vec<i8>) -> Result<Self> {
        if sites == 0 || slices < 2 {
            return Err(Error::invalid("lattice needs sites >= 1 and slices >= 2"));
        }
        if spins.len() != sites * slices {
            return Err(Error::contract(format!(
                "expected {} spins for a {sites}x{slices} lattice, got {}",
                sites * slices,
                spins.len()
            )));
        }
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::invalid(format!("spin value {bad} is not +-1")));
        }
        let mut cfg = TrotterConfig {
            sites,
            slices,
            spins,
            slice_sums: vec![0; slices],
            bond_sums: vec![0; slices],
        };
        cfg.rebuild_caches();
        Ok(cfg)
    }

    /// Configuration with `s_ik = f(i, k)`.
    pub fn from_fn(sites: usize, slices: usize, mut f: impl FnMut(usize, usize) -> i8) -> Result<Self> {
        let mut spins = Vec::with_capacity(sites * slices);
        for k in 0..slices {
            for i in 0..sites {
                spins.push(f(i, k));
            }
        }
        TrotterConfig::new(sites, slices, spins)
    }

    pub fn all_up(sites: usize, slices: usize) -> Result<Self> {
        TrotterConfig::new(sites, slices, vec![1; sites * slices])
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> i8 {
        self.spins[k * self.sites + i]
    }

    #[inline]
    pub(crate) fn next_slice(&self, k: usize) -> usize {
        if k + 1 == self.slices {
            0
        } else {
            k + 1
        }
    }

    #[inline]
    pub(crate) fn prev_slice(&self, k: usize) -> usize {
        if k == 0 {
            self.slices - 1
        } else {
            k - 1
        }
    }

    /// `S_k = sum_i s_ik`.
    pub fn slice_sum(&self, k: usize) -> i64 {
        self.slice_sums[k]
    }

    /// `W_k = sum_i s_ik s_i,k+1` (k+1 taken mod M).
    pub fn bond_sum(&self, k: usize) -> i64 {
        self.bond_sums[k]
    }

    /// Flips `s_ik` and updates the cached sums.
    #[inline]
    pub fn flip(&mut self, i: usize, k: usize) {
        let n = self.sites;
        let kp = self.next_slice(k);
        let km = self.prev_slice(k);
        let s = self.spins[k * n + i] as i64;
        let up = self.spins[kp * n + i] as i64;
        let down = self.spins[km * n + i] as i64;
        self.spins[k * n + i] = -(s as i8);
        self.slice_sums[k] -= 2 * s;
        self.bond_sums[k] -= 2 * s * up;
        self.bond_sums[km] -= 2 * s * down;
    }

    fn rebuild_caches(&mut self) {
        let (slice_sums, bond_sums) = self.recompute_sums();
        self.slice_sums = slice_sums;
        self.bond_sums = bond_sums;
    }

    fn recompute_sums(&self) -> (Vec<i64>, Vec<i64>) {
        let n = self.sites;
        let mut slice_sums = vec![0; self.slices];
        let mut bond_sums = vec![0; self.slices];
        for k in 0..self.slices {
            let kp = self.next_slice(k);
            for i in 0..n {
                let s = self.spins[k * n + i] as i64;
                slice_sums[k] += s;
                bond_sums[k] += s * self.spins[kp * n + i] as i64;
            }
        }
        (slice_sums, bond_sums)
    }

    /// Recomputes the cached sums and reports whether they were consistent.
    pub fn audit(&self) -> bool {
        let (slice_sums, bond_sums) = self.recompute_sums();
        slice_sums == self.slice_sums && bond_sums == self.bond_sums
    }

    fn check_dims(&self, params: &ModelParams) -> Result<()> {
        if params.sites != self.sites || params.slices != self.slices {
            return Err(Error::contract(format!(
                "config is {}x{} but params describe {}x{}",
                self.sites, self.slices, params.sites, params.slices
            )));
        }
        Ok(())
    }

    fn check_index(&self, i: usize, k: usize) -> Result<()> {
        if i >= self.sites || k >= self.slices {
            return Err(Error::contract(format!(
                "spin index ({i}, {k}) outside {}x{} lattice",
                self.sites, self.slices
            )));
        }
        Ok(())
    }

    /// `sum_{i<j} s_ik s_jk = ((S_k)^2 - N) / 2`.
    fn pair_sum(&self, k: usize) -> i64 {
        let s = self.slice_sums[k];
        (s * s - self.sites as i64) / 2
    }

    pub fn counts(&self) -> ObservableCounts {
        ObservableCounts {
            magnet: self.slice_sums.iter().sum(),
            pairs: (0..self.slices).map(|k| self.pair_sum(k)).sum(),
            bonds: self.bond_sums.iter().sum(),
        }
    }

    /// Trotter Hamiltonian
    /// `H = -(1/M) sum_k sum_{i<j} J_ij s_ik s_jk - (h/M) sum s_ik - (B/beta) sum s_ik s_i,k+1`,
    /// with the pair sum taken from the cached slice sums.
    pub fn hamiltonian(&self, params: &ModelParams) -> Result<f64> {
        self.check_dims(params)?;
        let c = self.counts();
        let m = params.slices as f64;
        let pair_term = -params.coupling() * c.pairs as f64 / m;
        let field_term = -params.h * c.magnet as f64 / m;
        let bond_term = if c.bonds == 0 {
            0.0
        } else {
            -params.b() / params.beta * c.bonds as f64
        };
        Ok(pair_term + field_term + bond_term)
    }

    /// `h_ik = (1/M) sum_{j != i} J_ij s_jk + (B/beta)(s_i,k+1 + s_i,k-1) + h/M`.
    pub fn local_field(&self, i: usize, k: usize, params: &ModelParams) -> Result<f64> {
        self.check_dims(params)?;
        self.check_index(i, k)?;
        Ok(self.local_field_unchecked(i, k, params))
    }

    #[inline]
    pub(crate) fn local_field_unchecked(&self, i: usize, k: usize, params: &ModelParams) -> f64 {
        let s = self.get(i, k) as i64;
        let others = self.slice_sums[k] - s;
        let nb = self.get(i, self.next_slice(k)) as i64 + self.get(i, self.prev_slice(k)) as i64;
        local_field_from_counts(others, nb, params)
    }

    /// Glauber rate `w_ik = 1/2 [1 - s_ik tanh(beta h_ik)]`.
    pub fn flip_rate(&self, i: usize, k: usize, params: &ModelParams) -> Result<f64> {
        let field = self.local_field(i, k, params)?;
        Ok(glauber_rate(self.get(i, k), params.beta * field))
    }

    pub fn slice_observables(&self, params: &ModelParams) -> Result<SliceObservables> {
        self.check_dims(params)?;
        let n = self.sites as f64;
        let m = self.slice_sums.iter().map(|&s| s as f64 / n).collect();
        let e = (0..self.slices)
            .map(|k| -params.j0 * self.pair_sum(k) as f64 / (n * n))
            .collect();
        let eps = self.bond_sums.iter().map(|&w| w as f64 / n).collect();
        Ok(SliceObservables { m, e, eps })
    }

    pub fn avg_observables(&self, params: &ModelParams) -> Result<AvgObservables> {
        self.check_dims(params)?;
        Ok(self.counts().to_avg(params))
    }

    /// Exact change of [`ObservableCounts`] if `s_ik` were flipped.
    pub fn flip_delta_counts(&self, i: usize, k: usize) -> Result<ObservableCounts> {
        self.check_index(i, k)?;
        let s = self.get(i, k) as i64;
        let nb = self.get(i, self.next_slice(k)) as i64 + self.get(i, self.prev_slice(k)) as i64;
        Ok(ObservableCounts {
            magnet: -2 * s,
            pairs: -2 * s * (self.slice_sums[k] - s),
            bonds: -2 * s * nb,
        })
    }

    /// Single-flip susceptibilities of the slice-averaged observables:
    /// `dm = -2 s/(NM)`, `dE = 2 s (NM)^-1 sum_{j!=i} J_ij s_jk`,
    /// `deps = -2 s (s_i,k+1 + s_i,k-1)/(NM)`.
    pub fn flip_delta_avg(&self, i: usize, k: usize, params: &ModelParams) -> Result<AvgObservables> {
        self.check_dims(params)?;
        let s = self.get(i, k) as f64;
        let nm = params.spin_count() as f64;
        let others = (self.slice_sums[k] - self.get(i, k) as i64) as f64;
        let nb = (self.get(i, self.next_slice(k)) + self.get(i, self.prev_slice(k))) as f64;
        Ok(AvgObservables {
            m: -2.0 * s / nm,
            e: 2.0 * s * params.coupling() * others / nm,
            eps: -2.0 * s * nb / nm,
        })
    }

    /// Slice-resolved susceptibilities: only entries `k` (for m, E, eps) and
    /// `k-1` (for eps) are non-zero.
    pub fn flip_delta_slice(&self, i: usize, k: usize, params: &ModelParams) -> Result<SliceObservables> {
        self.check_dims(params)?;
        self.check_index(i, k)?;
        let n = self.sites as f64;
        let s = self.get(i, k) as f64;
        let others = (self.slice_sums[k] - self.get(i, k) as i64) as f64;
        let km = self.prev_slice(k);
        let mut d = SliceObservables {
            m: vec![0.0; self.slices],
            e: vec![0.0; self.slices],
            eps: vec![0.0; self.slices],
        };
        d.m[k] = -2.0 * s / n;
        d.e[k] = 2.0 * s * params.coupling() * others / n;
        d.eps[k] += -2.0 * s * self.get(i, self.next_slice(k)) as f64 / n;
        d.eps[km] += -2.0 * s * self.get(i, km) as f64 / n;
        Ok(d)
    }
}

/// Local field from the other spins of slice `k` summed (`others`) and the
/// Trotter neighbour sum `nb = s_i,k+1 + s_i,k-1`.
#[inline]
pub(crate) fn local_field_from_counts(others: i64, nb: i64, params: &ModelParams) -> f64 {
    let m = params.slices as f64;
    let bond = if nb == 0 { 0.0 } else { params.b() / params.beta * nb as f64 };
    params.coupling() * others as f64 / m + bond + params.h / m
}

/// `1/2 [1 - s tanh(arg)]` with `arg = beta * h_ik`, clamped at `|arg| > 40`.
#[inline]
pub fn glauber_rate(s: i8, arg: f64) -> f64 {
    let t = if arg > TANH_CLAMP {
        1.0
    } else if arg < -TANH_CLAMP {
        -1.0
    } else {
        arg.tanh()
    };
    0.5 * (1.0 - s as f64 * t)
}
