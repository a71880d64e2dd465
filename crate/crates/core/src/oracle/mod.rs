//! Independent checks of the transform engine: Monte Carlo under either
//! measure, a finite-difference solver for the pricing equation, and moment
//! matching of the volatility dynamics.

pub mod mc;
pub mod pde;
pub mod sde;

pub use mc::{
    mc_price, simulate_cir, terminal_moments, CirParams, McEstimate, McPrice, Measure, Scheme, SimSpec, TerminalMoments,
};
pub use pde::{pde_price, pde_solve, PdeGrid, PdePrice, PdeSolution};
pub use sde::{sde_consistency_report, SdeLevel, SdeReport, PROBE_LEVELS};
