//! Tools for first-order, linear, homogeneous, constant-coefficient
//! differential operators `A = Σ_α A_α ∂_α` acting on vector fields
//! `u: Ω ⊂ R^n → R^N`.
//!
//! The crate classifies such operators (R-ellipticity, C-ellipticity,
//! the cancelling property), computes their polynomial nullspaces,
//! builds boundary traces of discretized fields through dyadic covers
//! with reflected interior balls, verifies the structural identities
//! those traces satisfy (Gauss–Green, gluing, zero-trace, no-trace
//! counterexamples) and minimizes relaxed linear-growth Dirichlet
//! energies with a primal-dual splitting.

pub mod domain;
pub mod ellipticity;
pub mod error;
pub mod expr;
pub mod fields;
pub mod grid;
pub mod io;
pub mod nullspace;
pub mod operator;
pub mod poly;
pub mod projection;
pub mod quad;
pub mod report;
pub mod solver;
pub mod tolerances;
pub mod trace;
pub mod whitney;

pub use error::{AbvError, Result};
pub use grid::{DiscreteField, Grid, MeasureField};
pub use operator::Operator;
