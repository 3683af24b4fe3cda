//! Simulation, prediction and control for co-locating latency-critical
//! packet processing with best-effort batch jobs on one node.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod controller;
pub mod error;
pub mod featsel;
pub mod harness;
pub mod mlcore;
pub mod qospred;
pub mod rng;
pub mod simenv;

pub use error::{Error, Result};
