//! Numerical solver for concave-convex problems driven by the Grushin
//! operator `Δ_λ = Δ_x + |x|^{2λ} Δ_y`.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod critical_solver;
pub mod error;
pub mod fibering;
pub mod functional;
pub mod grid;
pub mod model;
pub mod nehari_solver;
pub mod operator;
pub mod sparse;

pub use error::{Error, Result};
pub use grid::{Cutoff, Field, TensorGrid};
pub use model::{Exponents, ProblemSpec, Regime, ValidationReport, WeightSpec};
pub use operator::{GrushinOperator, PowerMode};
