//! Toolkit for linearly constrained quadratic programs in standard form
//! `min ½xᵀQx + cᵀx  s.t. Ax = b, x ≥ 0`.
//!
//! The crate bundles a primal-dual interior-point solver, null-space
//! projection, seeded instance generators, a graph encoding of instances,
//! a message-passing network trained by hand-written backprop, the
//! training/inference loops that use it, and a hand-built message-passing
//! program that reproduces the solver's conjugate-gradient iterations.

// Negated float comparisons are how NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod datasets;
pub mod error;
pub mod graph;
pub mod ipm;
pub mod mpnn;
pub mod nullspace;
pub mod oracle;
pub mod pipelines;
pub mod problem;
pub mod rng;
pub mod simproof;
pub mod sparse;

pub use error::{LcqpError, Result};
pub use problem::{
    constraint_violation, kkt_residuals, objective, relative_objective_gap, to_equality_form,
    KktResiduals, LcqpInstance, ObjectiveGap, RowSense, SolveReport,
};
pub use sparse::SparseMatrix;
