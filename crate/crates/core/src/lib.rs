//! Evolution of one-factor SDE distributions on a grid.
//!
//! A distribution is carried as a CDF on a uniform grid. Each time step moves
//! the grid points with the drift, resamples monotonically onto a uniform
//! grid, convolves with the Gaussian increment of the diffusion and trims the
//! tails. Prices are expectations over the terminal grid.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convolve;
pub mod error;
pub mod greeks;
pub mod grid;
pub mod multidim;
pub mod normal;
pub mod oracles;
pub mod pricing;
pub mod process;
pub mod stochvol;

pub use error::{Error, Result};
pub use grid::{GridDistribution, Kind};
