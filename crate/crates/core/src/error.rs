//! Crate-wide error type for the geometry layers.
//!
//! The expression module has its own [`crate::expr::ExprError`] (syntax and
//! evaluation-domain failures); everything geometric funnels into [`Error`].

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),

    #[error("chart mismatch: expected `{expected}`, got `{got}`")]
    ChartMismatch { expected: String, got: String },

    #[error("degree mismatch: {context}")]
    DegreeMismatch { context: String },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("coordinate `{0}` is already taken on this chart")]
    CoordinateTaken(String),

    #[error("affine system is inconsistent (residual {residual:.3e} exceeds tolerance {tolerance:.3e})")]
    Inconsistent { residual: f64, tolerance: f64 },

    #[error("field is not a conformal symmetry of the hyperplane form (residual {residual:.3e})")]
    NotConformal { residual: f64 },

    #[error("structure is not precontact of the claimed rank: {context}")]
    RankMismatch { context: String },

    #[error("hyperplane form vanishes at a sampled point: {context}")]
    VanishingForm { context: String },

    #[error("scaling factor must be nonzero")]
    ZeroScaling,

    #[error("Hamiltonian is not 1-homogeneous (residual {residual:.3e} at a sampled point)")]
    NotHomogeneous { residual: f64 },

    #[error("no Reeb field: the defining linear system has no unique solution ({context})")]
    NoReeb { context: String },

    #[error("bracket cross-check diverged: formula route {formula:.6e} vs commutator route {commutator:.6e}")]
    BracketCrossCheck { formula: f64, commutator: f64 },

    #[error("trajectory escaped the chart domain at t = {time:.6} (coordinate `{coord}` = {value:.6e})")]
    DomainEscape { time: f64, coord: String, value: f64 },

    #[error("trajectory became non-finite at t = {time:.6}")]
    NonFinite { time: f64 },

    #[error("point does not satisfy the constraints (|{constraint}| = {value:.3e})")]
    OffSubmanifold { constraint: String, value: f64 },

    #[error("constraint Jacobian is rank-deficient at the point (rank {rank}, expected {expected})")]
    DegenerateConstraints { rank: usize, expected: usize },

    #[error("sampling exhausted: could not find {requested} admissible points (found {found})")]
    SamplingExhausted { requested: usize, found: usize },

    #[error("invalid input: {0}")]
    Invalid(String),
}
