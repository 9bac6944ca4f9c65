//! Multigroup neutron-diffusion k-eigenvalue solvers in 1-D spherical geometry.
//!
//! Two inverse power iterations are provided over the same discretization:
//!
//! * [`power_full`]: the classical dense iteration on the `N_x × G` flux matrix.
//! * [`power_dlra`]: a dynamical low-rank iteration that evolves the flux as
//!   `X S Wᵀ` with the unconventional (K/L/S) integrator, in fixed-rank and
//!   rank-adaptive variants.
//!
//! [`simplified`] runs both iterations on the two-sided model problem
//! `A φ B = λ C φ D` and measures convergence rates, and [`cli`] drives the
//! whole pipeline from a TOML configuration.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod history;
pub mod kron_solve;
pub mod linalg;
pub mod materials;
pub mod mesh;
pub mod operators;
pub mod power_dlra;
pub mod power_full;
pub mod problem;
pub mod simplified;

pub use error::{Error, Result};
pub use history::ConvergenceHistory;
pub use kron_solve::{assemble_vectorized, MultiTermSystem, VectorizedOperator};
pub use materials::{DensityField, EnergyGrid, MaterialLibrary, MaterialRecord};
pub use mesh::SpatialMesh;
pub use operators::{assemble_operators, OperatorSet, OuterBoundary};
pub use power_dlra::LowRankState;
pub use problem::SeparableProblem;

/// Dense column-major matrix used throughout the crate.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense column vector.
pub type Vector = nalgebra::DVector<f64>;
