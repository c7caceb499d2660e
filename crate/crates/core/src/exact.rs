//! Exact enumeration over all `2^(NM)` configurations of small lattices.

use crate::error::{Error, Result};
use crate::lattice::TrotterConfig;
use crate::params::ModelParams;

pub const MAX_ENUMERATED_SPINS: usize = 24;

/// Configuration encoded by the bits of `index` (bit `k*N + i` set means `s_ik = +1`).
pub fn config_from_index(sites: usize, slices: usize, index: u64) -> Result<TrotterConfig> {
    let spins = (0..sites * slices).map(|b| if index >> b & 1 == 1 { 1 } else { -1 }).collect();
    TrotterConfig::new(sites, slices, spins)
}

pub fn config_index(config: &TrotterConfig) -> u64 {
    config
        .spins()
        .iter()
        .enumerate()
        .fold(0, |acc, (b, &s)| if s > 0 { acc | 1 << b } else { acc })
}

/// Gibbs weights `exp(-beta H) / Z` of the Trotter Hamiltonian, indexed as in
/// [`config_from_index`].
pub fn gibbs_distribution(params: &ModelParams) -> Result<Vec<f64>> {
    let n = params.spin_count();
    if n > MAX_ENUMERATED_SPINS {
        return Err(Error::invalid(format!("{n} spins is too many to enumerate")));
    }
    let mut log_w = Vec::with_capacity(1 << n);
    for index in 0..1u64 << n {
        let cfg = config_from_index(params.sites, params.slices, index)?;
        log_w.push(-params.beta * cfg.hamiltonian(params)?);
    }
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / z).collect())
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
