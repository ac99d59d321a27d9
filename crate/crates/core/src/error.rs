//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Basis construction would overflow the addressable range.
    #[error("basis too large: {0}")]
    BasisTooLarge(String),

    /// A vector or matrix does not match the expected dimension.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Raising a bath mode would leave the single-excitation sector.
    #[error("single-excitation sector violation while raising mode {mode}")]
    SectorViolation { mode: usize },

    /// A model specification failed validation.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// An integrator configuration failed validation.
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),

    /// A time was requested that is not on the stored lattice.
    #[error("t = {t} is not on the stored lattice (spacing {step}); align the grids")]
    OffLattice { t: f64, step: f64 },

    /// The propagated state drifted away from unit norm.
    #[error("norm drift {drift:.3e} exceeds {limit:.1e} at step {step} (t = {t})")]
    NormDrift {
        step: usize,
        t: f64,
        drift: f64,
        limit: f64,
    },

    /// Accumulated Fock-truncation loss crossed the run-level limit.
    #[error("truncation loss {loss:.3e} exceeds {limit:.1e} at step {step} (t = {t})")]
    TruncationLoss {
        step: usize,
        t: f64,
        loss: f64,
        limit: f64,
    },

    /// The conditioned-state weight underflowed: the hidden values sit on a
    /// wavefunction node where the velocity field is singular.
    #[error("conditioned-state weight underflow (node) at t = {t}")]
    NodeEncountered { t: f64 },

    /// The bath mode list cannot be arranged into symmetric detuning pairs.
    #[error("bath is not pairable for the quadrature unraveling: {0}")]
    UnpairableBath(String),

    /// Probability current flows into a state with vanishing occupation.
    #[error("current {current:.3e} into state {index} with probability {probability:.3e}")]
    CurrentIntoUnoccupied {
        index: usize,
        current: f64,
        probability: f64,
    },

    /// A jump-process step probability exceeded the stability bound.
    #[error("total jump probability {prob:.3} per step exceeds 0.1 at t = {t}; reduce dt")]
    JumpStepTooLarge { t: f64, prob: f64 },

    /// Too many trajectories failed on nodes for the ensemble to be trusted.
    #[error("node-failure rate {failed}/{total} exceeds 0.5%")]
    FailureRate { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
