//! Training and evaluation workbench for adversarially regularized VAEs.
//!
//! [`synthdata`] renders labelled sprite datasets, [`vae`] and [`train`] hold
//! the model and its accuracy-driven capacity schedule, [`pipe`] scores
//! representations without labels and [`metrics`] with them. [`harness`]
//! ties these together into resumable sweeps.

// NaN-rejecting checks are written as negated comparisons on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod pipe;
pub mod synthdata;
pub mod train;
mod textkv;
pub mod vae;

pub use error::{Error, Result};
