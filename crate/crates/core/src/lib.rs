//! Calibration of hybrid insurance contracts for heavy-tailed losses.
//!
//! A hybrid contract indemnifies the loss `y` in full up to a threshold `s`
//! and switches to an index payout `s * phi_theta(w)` above it, where `w` is a
//! vector of covariates observed right after the event. This crate provides:
//!
//! - [`dists`]: covariate-linked Pareto / generalized Pareto loss models,
//!   sampling, tail functionals and maximum-likelihood fitting;
//! - [`contract`]: payoff families, hybrid / trigger / capped payouts and premiums;
//! - [`objective`]: the ratio-based decision metric, its tail approximation and
//!   the special functions it needs;
//! - [`calibrate`]: one-step and two-step calibration of `theta`, and the
//!   learning-curve experiment;
//! - [`compare`]: equal-price comparison against capped indemnity contracts;
//! - [`ingest`]: SPC tornado file parsing and sample construction;
//! - [`cli`]: configuration and the reproducible experiment commands.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod cli;
pub mod compare;
pub mod contract;
pub mod dists;
mod error;
pub mod ingest;
pub mod objective;
pub mod optim;
pub mod quad;
pub mod stats;

pub use error::{Error, Result};
