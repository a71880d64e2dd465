//! Indifference pricing and hedging of pure volatility claims when the
//! reciprocal of squared volatility follows a square-root process.
//!
//! The transform engine lives in [`transform`] and [`pricer`]; [`oracle`]
//! holds independent Monte Carlo and finite-difference checks.

pub mod claims;
pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod oracle;
pub mod pathsim;
pub mod pricer;
pub mod transform;

pub use error::{Error, Result};
