//! Conditioned and feedback-controlled evolution of few-level open quantum
//! systems: Lindblad generators, exact counting statistics of the driven
//! two-level atom, stochastic filters for counting and quadrature
//! observation, squeezed-noise algebra, and measurement-feedback loops.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod davies;
pub mod error;
pub mod filter;
pub mod lindblad;
pub mod linops;
pub mod squeeze;
pub mod stats;

pub use error::{Error, Result};
pub use linops::{mat_exp, superop_exp, trace_distance, CMat, DensityMatrix, SuperOp, C64};
