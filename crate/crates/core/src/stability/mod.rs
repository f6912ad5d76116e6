//! Distances between measures, parameter sweeps, and matching diagnostics
//! between two towers over nearby bases.

mod distance;
mod sweep;
mod uniformity;

use thiserror::Error;

use crate::models::MapError;
use crate::srb::SrbError;
use crate::tower::TowerError;

pub use distance::{sliced_w1, w1_distance_1d, Distance};
pub use sweep::{
    bernoulli_entropy, bernoulli_tower, entropy_continuity_sweep, median_iqr, stability_sweep, DeltaSummary,
    EntropyFamily, EntropyReport, EntropyRow, Family, StabilityReport, StabilityRow, SweepSpec,
};
pub use uniformity::{uniformity_diagnostics, UniformityDiagnostics};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Srb(#[from] SrbError),
    #[error(transparent)]
    Tower(#[from] TowerError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("supports {first:?} and {second:?} are disjoint")]
    IncompatibleSupports { first: [f64; 2], second: [f64; 2] },
    #[error("bases {first:?} and {second:?} do not overlap")]
    BaseMismatch { first: [f64; 2], second: [f64; 2] },
    #[error("invalid input: {0}")]
    Invalid(String),
}
