//! Particle methods for the one-dimensional fast diffusion equation
//! `u_t = (u^m)_xx`, `0 < m < 1`, checked against the Barenblatt profile.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod exact;
pub mod grid;
pub mod io;
pub mod kde;
pub mod mckean;
pub mod quadrature;
pub mod rng;
pub mod sde;

pub use config::{Mode, SolverConfig};
pub use error::{Error, Result};
pub use exact::{BarenblattSampler, FastDiffusionParams, IntegralValue};
pub use grid::{SpaceTimeGrid, SpatialGrid};
pub use kde::{estimate_density, BandwidthRule, DensityField};
pub use mckean::{compare_to_exact, solve_mckean, McKeanConfig, RunReport};
pub use rng::RngStream;
pub use sde::{euler_step, CoefficientSpec, ParticleCloud};
