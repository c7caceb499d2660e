//! Simulated quantum annealing of mean-field transverse-field Ising models.
//!
//! The crate covers the microscopic side (Trotter lattice, Glauber engine) and
//! the macroscopic side (exact chain transfer matrices, the maximum-entropy
//! closure, the closed flows and the equilibrium theory they relax to).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closure;
pub mod error;
pub mod exact;
pub mod flow;
pub mod glauber;
pub mod jet;
pub mod lattice;
pub mod params;
pub mod rng;
pub mod statics;
pub mod transfer;

pub use closure::{solve_u, solve_xy, solve_xy_hetero, ClosureSolution, HeteroSolution, URoot};
pub use error::{Error, Result};
pub use flow::{integrate, q_pm, rhs, FlowKind, FlowRecord, FlowTrajectory};
pub use glauber::{init_config, run, InitSpec, SimSpec, Trajectory};
pub use lattice::{AvgObservables, SliceObservables, TrotterConfig};
pub use params::ModelParams;
pub use statics::{solve_m, toeplitz_spectrum, BifurcationReport, EquilibriumResult};
pub use transfer::{eigensystem, hetero_moments, moments, xi_exact, xi_expansion, ChainMoments, HeteroMoments};
