use thiserror::Error;

/// Failure modes shared by every simulation module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("squared norm vanished in working precision")]
    ZeroNorm,

    #[error("x0 = {x0} is not on the lattice of stake {stake}")]
    NonIntegralState { x0: f64, stake: f64 },

    #[error("time step {dt:e} violates the explicit stability bound {bound:e}")]
    UnstableStep { dt: f64, bound: f64 },

    #[error("time step {dt:e} exceeds the accuracy bound {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("grid spacing {dx:e} does not resolve the localization width (need dx <= {max_dx:e})")]
    GridTooCoarse { dx: f64, max_dx: f64 },

    #[error("n = {n} exceeds the particle number {particles} of the sector")]
    BadSector { n: usize, particles: usize },

    #[error("effective sample size {ess:.1} is below the minimum {min:.1}")]
    DegenerateWeights { ess: f64, min: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn require_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and >= 0, got {value}")))
    }
}
