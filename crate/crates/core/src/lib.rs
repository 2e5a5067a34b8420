//! Microscopic simulation of a signalized intersection with a short lane on
//! one approach, and the experiment harness that compares lane designs.

// `!(x > 0.0)` is how parameter checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod demand;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod network;
pub mod signal;
pub mod traffic;

pub use error::{Error, Result};
