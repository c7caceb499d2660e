//! Model parameters of the Trotter-mapped transverse-field Ising system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the mean-field (Curie-Weiss) transverse-field model in its
/// Trotter representation with `sites` spins per slice and `slices` slices.
///
/// Couplings are uniform, `J_ij = j0 / sites`, and never stored. The Trotter
/// bond strength `B = -1/2 log tanh(beta*gamma/slices)` is derived on
/// construction and on deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    pub sites: usize,
    pub slices: usize,
    pub beta: f64,
    pub gamma: f64,
    pub h: f64,
    pub j0: f64,
    pub tau: f64,
    b: f64,
}

#[derive(Deserialize)]
struct RawParams {
    sites: usize,
    slices: usize,
    beta: f64,
    gamma: f64,
    h: f64,
    j0: f64,
    tau: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(
            raw.sites, raw.slices, raw.beta, raw.gamma, raw.h, raw.j0, raw.tau,
        )
    }
}

/// `B = -1/2 log tanh(beta*gamma/slices)`; infinite when `gamma == 0`.
pub fn trotter_coupling(beta: f64, gamma: f64, slices: usize) -> f64 {
    -0.5 * (beta * gamma / slices as f64).tanh().ln()
}

impl ModelParams {
    pub fn new(
        sites: usize,
        slices: usize,
        beta: f64,
        gamma: f64,
        h: f64,
        j0: f64,
        tau: f64,
    ) -> Result<Self> {
        if sites < 1 {
            return Err(Error::invalid("sites (N) must be at least 1"));
        }
        if slices < 3 {
            return Err(Error::invalid(format!(
                "slices (M) must be at least 3, got {slices}"
            )));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid(format!("beta must be finite and > 0, got {beta}")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::invalid(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        if !h.is_finite() || !j0.is_finite() {
            return Err(Error::invalid("h and J0 must be finite"));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid(format!("tau must be finite and > 0, got {tau}")));
        }
        Ok(ModelParams {
            sites,
            slices,
            beta,
            gamma,
            h,
            j0,
            tau,
            b: trotter_coupling(beta, gamma, slices),
        })
    }

    /// Copy of these parameters with a different slice count (B is recomputed).
    pub fn with_slices(&self, slices: usize) -> Result<Self> {
        ModelParams::new(
            self.sites, slices, self.beta, self.gamma, self.h, self.j0, self.tau,
        )
    }

    /// Copy with `tau = 1/slices^2`, the slow-timescale normalization.
    pub fn with_slow_time_units(&self) -> Self {
        let mut p = self.clone();
        p.tau = 1.0 / (self.slices as f64 * self.slices as f64);
        p
    }

    /// Trotter bond strength `B`.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// `tanh(beta*gamma/slices)`, which equals `exp(-2B)`.
    pub fn bond_weight(&self) -> f64 {
        (self.beta * self.gamma / self.slices as f64).tanh()
    }

    /// Uniform pair coupling `J_ij = J0/N`.
    pub fn coupling(&self) -> f64 {
        self.j0 / self.sites as f64
    }

    pub fn spin_count(&self) -> usize {
        self.sites * self.slices
    }

    pub fn has_finite_bonds(&self) -> bool {
        self.gamma > 0.0
    }

    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ModelParams {
        ModelParams::new(100, 12, 2.0, 0.5, 0.5, 1.0, 1.0 / 144.0).unwrap()
    }

    #[test]
    fn b_recomputes_exactly() {
        let p = reference();
        assert_eq!(p.b(), trotter_coupling(p.beta, p.gamma, p.slices));
        assert!(p.b().is_finite() && p.b() > 0.0);
    }

    #[test]
    fn exp_minus_two_b_is_bond_weight() {
        for &(beta, gamma, m) in &[(2.0, 0.5, 3), (2.0, 0.5, 192), (0.3, 4.0, 5), (10.0, 1.0, 7)] {
            let p = ModelParams::new(4, m, beta, gamma, 0.0, 0.0, 1.0).unwrap();
            let lhs = (-2.0 * p.b()).exp();
            let rhs = p.bond_weight();
            // one ulp in B, propagated through exp(-2B)
            let ulp = (1.0 + 2.0 * p.b()) * f64::EPSILON * rhs;
            assert!((lhs - rhs).abs() <= ulp, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn zero_gamma_gives_infinite_b() {
        let p = ModelParams::new(4, 4, 1.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(p.b().is_infinite());
        assert!(!p.has_finite_bonds());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ModelParams::new(0, 4, 1.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(4, 2, 1.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(4, 4, 0.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(4, 4, 1.0, -1.0, 0.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(4, 4, 1.0, 1.0, 0.0, 0.0, 0.0).is_err());
    }
}
