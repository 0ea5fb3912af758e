//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong when building operators, evolving models, or
/// estimating weak values.
#[derive(Debug, Error)]
pub enum Error {
    #[error("operator spaces do not match: {left:?} vs {right:?}")]
    SpaceMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("invalid Hilbert space: {0}")]
    InvalidSpace(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid effect: {0}")]
    InvalidEffect(String),

    #[error("subsystem index {index} out of range for space with {n_subsystems} subsystems")]
    SubsystemOutOfRange { index: usize, n_subsystems: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integration failure at step {step} (t = {time:.6e}): non-finite entries; reduce dt")]
    IntegrationFailure { step: usize, time: f64 },

    #[error("Liouvillian nullspace is degenerate (|second eigenvalue| = {second:.3e}); steady state is ambiguous")]
    DegenerateSteadyState { second: f64 },

    #[error("dimension guard exceeded: total_dim = {total_dim} > {max}")]
    DimensionGuard { total_dim: usize, max: usize },

    #[error("postselection impossible: |denominator| = {denominator:.3e} below floor {floor:.1e}")]
    PostselectionImpossible { denominator: f64, floor: f64 },

    #[error("pre/postselection nearly orthogonal: |<phi|psi>| = {overlap:.3e} below floor {floor:.1e}")]
    NearOrthogonal { overlap: f64, floor: f64 },

    #[error("jump probability per step p1 = {p1:.3e} > 0.1; dt too coarse for the counting channel")]
    DtTooCoarse { p1: f64 },

    #[error("step-size error: conditioned state violates invariants beyond {violation:.3e} after renormalization")]
    StepSizeError { violation: f64 },

    #[error("no postselection events in {n_total} trajectories; lengthen runs or widen the window")]
    NoPostselectionEvents { n_total: usize },

    #[error("no photon flux: Tr[a rho a^dag] = {flux:.3e} below 1e-14")]
    NoPhotonFlux { flux: f64 },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("fit failed to converge: final max residual {residual:.3e}")]
    FitFailure { residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Numerical(format!("linear algebra backend: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
