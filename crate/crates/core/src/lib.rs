//! Weighted potential theory with two Vandermonde factors.
//!
//! Energies use the kernel `-log|x-y| - log|f(x)-f(y)| + Q(x) + Q(y)` on a
//! closed set K. The crate computes discretized equilibrium measures with
//! Frostman certificates, weighted Fekete configurations, Metropolis samples
//! of the associated biorthogonal ensemble, partition functions and
//! large-deviation surrogates, plus Green functions of intervals and disks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cdf;
pub mod cli;
pub mod ensemble;
pub mod equilibrium;
pub mod error;
pub mod extremal;
pub mod fekete;
pub mod geometry;
pub mod kernel;

pub use error::{Error, Result};
