//! Weighted log-optimal proportional investment.
//!
//! The crate computes investment fractions that maximise an expected
//! weighted logarithmic growth rate under a no-ruin threshold, builds the
//! calibrating functions that turn "weighted log-capital minus cumulative
//! weighted entropy" into a martingale, and checks the resulting
//! supermartingale/martingale behaviour by Monte Carlo simulation.
//!
//! Module map:
//!
//! * [`model`]: finite-state market, assets, weights, validation and
//!   stationary distributions.
//! * [`entropy`]: weighted Kullback–Leibler rows, dominance slacks,
//!   calibrating functions and cumulative entropy paths.
//! * [`optimizer_discrete`]: balance-equation solvers for one or many
//!   assets, with and without a riskless asset, plus closed forms.
//! * [`optimizer_continuous`]: the same problem for IID trials with a
//!   density, using adaptive quadrature.
//! * [`simulator`]: seeded, thread-count independent path simulation and
//!   martingale statistics.
//! * [`cli`]: scenario files, workflows and reports behind the `wkelly`
//!   binary.

pub mod cli;
pub mod entropy;
pub mod error;
pub mod model;
pub mod optimizer_continuous;
pub mod optimizer_discrete;
pub mod simulator;

mod concave;
mod roots;

pub use error::{Error, Result};
