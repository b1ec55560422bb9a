//! Subgroup generalization and accuracy-disparity toolkit for graph neural
//! networks of the aggregate-then-MLP form.
//!
//! The crate covers bundle I/O, feature aggregation, subgroup construction,
//! a small MLP trainer, PAC-Bayes bound arithmetic with its Monte-Carlo
//! checks, synthetic data generators and the experiment harness that ties
//! them together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod cli;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod pac_bayes;
pub mod subgroup;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
