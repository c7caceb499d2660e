use thiserror::Error;

use crate::flow::FlowTrajectory;
use crate::glauber::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller broke a precondition (dimension or index mismatch).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Inputs are well-formed but outside the region where the quantity exists.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} did not converge after {iters} iterations (best residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("simulation truncated after {attempts} attempts (limit reached before t_end)")]
    Truncated {
        attempts: u64,
        partial: Box<Trajectory>,
    },

    #[error("flow integration failed at t={t}: {source}")]
    Flow {
        t: f64,
        partial: Box<FlowTrajectory>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures caused by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::Flow { .. } | Error::Domain(_)
        )
    }
}
