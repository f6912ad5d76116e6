//! Numerical toolkit for Gibbs-Markov towers and SRB measures.
//!
//! The crate is organized bottom-up:
//!
//! * [`tower`]: abstract induced maps on a base interval, their transfer
//!   operator, invariant density, return-time statistics and entropy.
//! * [`models`]: concrete interval maps and the Hénon family, plus first-return
//!   tower construction.
//! * [`srb`]: empirical measures, Birkhoff averages, Lyapunov exponents and
//!   saturation of induced measures.
//! * [`stability`]: distances between measures and parameter sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod expr;
pub mod interval;
pub mod models;
pub mod rng;
pub mod srb;
pub mod stability;
pub mod tower;

pub use interval::Interval;
pub use tower::{DistortionBudget, GibbsMarkovTower, QuotientDensity, TowerError};

/// Version string embedded in output files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
