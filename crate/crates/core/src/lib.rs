//! # llot-core
//!
//! Numerics for the marginal-preserving regularization of symmetric
//! N-particle probability measures, the fermionic mixed state built on top
//! of it, and the Coulomb multi-marginal optimal transport problem whose
//! value the regularized states approach in the semiclassical limit.
//!
//! Everything is discrete: one-particle densities live on uniform grids,
//! transport plans are finitely supported ("atomic"), and the regularized
//! measure is an evaluator over grid nodes. The smoothing kernel is
//! renormalized on the grid, so the marginal-preservation and trace
//! identities hold to rounding error rather than to quadrature error.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`grid`] | uniform grids, grid densities, H¹ seminorm of √ρ |
//! | [`plan`] | atomic symmetric plans, marginals, separation |
//! | [`mollifier`] | the bump χ, χ_ε, its moments, ρ ∗ χ_ε² |
//! | [`regularizer`] | the regularized plan P_ε and its checks |
//! | [`quantum`] | Slater determinants and the mixed state Γ_ε |
//! | [`mmot`] | LP and Sinkhorn solvers for the Coulomb MMOT problem |
//! | [`semiclassics`] | trial energies, ε optimization, η sweeps |
//!
//! Mass convention: every density and plan handled here has total mass 1.
//! Densities normalized to the particle number are converted at the I/O
//! boundary (see [`grid::MassConvention`]).

pub mod fixtures;
pub mod grid;
pub mod io;
pub mod mmot;
pub mod mollifier;
pub mod plan;
pub mod quadrature;
pub mod quantum;
pub mod regularizer;
pub mod selftest;
pub mod semiclassics;
pub mod tensor;

mod perm;
mod stats;

pub use grid::{Grid, GridDensity, MassConvention};
pub use mollifier::{BumpProfile, DiscreteKernel, ScaledMollifier};
pub use plan::{AtomicPlan, Atom, SeparationReport};
pub use quantum::MixedStateKernel;
pub use regularizer::RegularizedPlan;
pub use stats::loglog_slope;

use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty measure")]
    EmptyMeasure,

    #[error("separation undefined for single particle")]
    SeparationUndefined,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {point:?} is not a node of the grid")]
    OffGrid { point: Vec<f64> },

    #[error("kernel unresolved: eps = {eps} is below the grid spacing {spacing}")]
    KernelUnresolved { eps: f64, spacing: f64 },

    #[error("mollifier too wide for separation α̂ = {alpha}: eps = {eps} must be < α̂/4")]
    MollifierTooWide { eps: f64, alpha: f64 },

    #[error("density vanishes near plan support (node {node})")]
    DensityVanishes { node: usize },

    #[error("density is not the marginal of the plan (L1 mismatch {l1:.3e})")]
    MarginalMismatch { l1: f64 },

    #[error("kernel support around node {node} leaves the grid")]
    KernelLeavesGrid { node: usize },

    #[error("tensor grid too large: {entries} entries (limit {limit})")]
    TensorTooLarge { entries: u128, limit: usize },

    #[error("quadrature did not converge (achieved error estimate {achieved:.3e})")]
    QuadratureNotConverged { achieved: f64 },

    #[error("identity requires disjoint supports")]
    OverlappingSupports,

    #[error("test function lacks derivatives")]
    MissingDerivatives,

    #[error("no finite-cost feasible plan")]
    NoFeasiblePlan,

    #[error("LP has {variables} variables (limit {limit}); use the sinkhorn solver")]
    ProblemTooLarge { variables: u128, limit: usize },

    #[error("simplex did not terminate within {0} pivots")]
    SimplexIterationLimit(usize),

    #[error("numerical overflow at beta = {beta}; use log-domain mode (mandatory above beta = 50)")]
    NumericalOverflow { beta: f64 },

    #[error("empty feasible eps interval: eps_min = {eps_min} >= alpha/4 = {eps_max}")]
    EmptyEpsInterval { eps_min: f64, eps_max: f64 },

    #[error("all plan weights fall below the pruning threshold")]
    PrunedEmpty,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to rejected inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNotConverged { .. }
                | Error::DensityVanishes { .. }
                | Error::SimplexIterationLimit(_)
                | Error::NumericalOverflow { .. }
                | Error::PrunedEmpty
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order always matches input order, so reductions over the result
/// are reproducible.
pub(crate) fn ordered_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
