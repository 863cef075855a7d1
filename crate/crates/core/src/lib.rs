//! Simulator and diagnostics for Distributed Gradient Descent on decentralised
//! non-parametric least squares.
//!
//! The crate is organised around the pieces of an experiment:
//!
//! - [`topology`]: communication graphs, gossip matrices and their spectra.
//! - [`problem`]: synthetic regression problems in a truncated spectral model
//!   with a closed-form excess-risk oracle.
//! - [`engine`]: the distributed iteration together with the population and
//!   single-machine reference processes, advanced in lockstep.
//! - [`diagnostics`]: error decomposition, the population/residual covariance
//!   split, a path-enumeration oracle and log-log slope fitting.
//! - [`tuning`]: stopping-time and step-size rules, mixing cutoff, rate
//!   expressions and the runtime/speed-up model.
//! - [`experiment`]: config-driven sweeps, CSV output and summaries.

// Negated comparisons below double as NaN rejection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod engine;
mod error;
pub mod experiment;
pub mod problem;
pub mod seed;
pub mod topology;
pub mod tuning;

pub use error::{Error, Result};
