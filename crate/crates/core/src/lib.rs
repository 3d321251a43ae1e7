//! Transient analysis of multidimensional inhomogeneous birth-death processes.
//!
//! The crate integrates the forward Kolmogorov system on a truncated state
//! space ([`kolmogorov`]), projects the solution onto single coordinates or the
//! total particle count together with the effective birth/death rates of the
//! projection ([`projection`]), and computes and checks exponential decay
//! certificates for those projections ([`bounds`]). An independent Monte Carlo
//! simulator ([`mc_oracle`]) cross-checks the ODE marginals, and [`cli`] drives
//! everything from a TOML model file.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod kolmogorov;
pub mod mc_oracle;
pub mod model;
pub mod output;
pub mod projection;
pub mod suite;

pub use error::{Error, Result};
