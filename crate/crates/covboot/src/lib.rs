//! Second-order inference for functional time series.
//!
//! Curves are discretized on a uniform midpoint grid of [0,1] so that every
//! L2 and Hilbert-Schmidt quantity is a plain quadrature sum. On top of that
//! sit empirical covariance, cross-covariance and autocovariance operators,
//! CUSUM paths for changepoint detection, a nonoverlapping block bootstrap
//! (with a moving block variant as baseline), bootstrap hypothesis tests, and
//! a Monte Carlo harness that tabulates their size and power.
//!
//! Everything that consumes randomness is seeded and reproducible: replicate
//! streams are derived from a seed and a counter, so results do not depend on
//! thread count or evaluation order.

pub mod bootstrap;
pub mod covops;
pub mod datagen;
pub mod error;
pub mod fspace;
pub mod harness;
pub mod htest;

mod gram;

pub use error::{Error, Result};
