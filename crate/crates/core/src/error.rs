use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty Fock basis: {n_particles} particles do not fit on {n_sites} sites with at most {n_max} per site")]
    EmptyBasis {
        n_particles: usize,
        n_sites: usize,
        n_max: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operator does not commute with lattice translation (defect {defect:e})")]
    NotTranslationInvariant { defect: f64 },

    #[error("occupation {occupation} on site {site} exceeds cutoff {n_max}")]
    OccupationAboveCutoff {
        site: usize,
        occupation: usize,
        n_max: usize,
    },

    #[error("propagator unitarity defect {defect:e} exceeds {tolerance:e}")]
    UnitarityDefect { defect: f64, tolerance: f64 },

    #[error(
        "Floquet propagator did not converge: eigenphase shift {previous_shift:e} \
         ({previous_steps} -> {}) and {last_shift:e} ({last_steps} -> {})",
        2 * previous_steps,
        2 * last_steps
    )]
    NotConverged {
        previous_steps: usize,
        previous_shift: f64,
        last_steps: usize,
        last_shift: f64,
    },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("eigenvector residual {residual:e} exceeds {tolerance:e}")]
    EigenResidual { residual: f64, tolerance: f64 },

    #[error("at least two eigenphases are required, got {0}")]
    TooFewPhases(usize),

    #[error("dense representation of size {size} exceeds the cap of {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("norm drift {drift:e} at t = {time} exceeds the tolerated {tolerance}")]
    NormDrift { time: f64, drift: f64, tolerance: f64 },

    #[error("states live in different Fock bases")]
    BasisMismatch,

    #[error("time step {dt} does not divide the interval {interval}")]
    StepMismatch { dt: f64, interval: f64 },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = core::result::Result<T, Error>;
