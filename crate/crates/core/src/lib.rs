//! Numerical laboratory for the singular elliptic problem
//! `-Δu = d(x)^(-β) u^(-α)` in Ω, `u = 0` on ∂Ω.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod barriers;
pub mod error;
pub mod grid;
pub mod linear_core;
pub mod monotone_solver;
pub mod newton;
pub mod operator;
pub mod oracle;
pub mod pipeline;
pub mod problem;
pub mod regularized_solver;
pub mod spectral;

pub use error::{Result, SelError};
pub use grid::{build_grid, DomainShape, Grid, ScalarField};
pub use problem::{ProblemSpec, ShiftPolicy};
