use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("grid spacing {spacing} too coarse; need spacing <= {max_spacing}")]
    SpacingTooCoarse { spacing: f64, max_spacing: f64 },

    #[error("move radius {eps} is smaller than the grid spacing {spacing}")]
    RadiusBelowSpacing { eps: f64, spacing: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    /// The pair (p, S) lies in neither the nondegenerate-gradient set nor the
    /// isotropic-Hessian set, so the limit operator is undefined there.
    #[error("(p, S) outside operator domain: |p| = {grad_norm:e}, anisotropy = {anisotropy:e}")]
    OutsideOperatorDomain { grad_norm: f64, anisotropy: f64 },

    #[error("degenerate gradient |Du| = {0:e}")]
    DegenerateGradient(f64),

    #[error("exit-forcing construction invalid here: |D psi| = {0} < 1/2")]
    OutsideExitForcingRegion(f64),

    #[error("finite-difference stencil leaves the closed domain at step {0}")]
    NearBoundary(f64),

    #[error("no convergence after {sweeps} sweeps (last residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
