//! Concrete dynamical systems: interval maps, the Hénon family, trapping
//! regions, unstable manifolds, and first-return tower construction.

pub mod first_return;
pub mod henon;
pub mod manifold;
pub mod map1d;
pub mod system;
pub mod trapping;

use thiserror::Error;

pub use first_return::{first_return_tower, FirstReturnOptions, FirstReturnOutcome};
pub use henon::{henon_fixed_point, FixedPointData, HenonMap, Mat2, Point2};
pub use manifold::{manifold_containment_defect, unstable_manifold_segment, UnstableManifold};
pub use map1d::Map1D;
pub use system::{iterate, orbit, LinearMap2, Noise, SampledOrbit, System, ORBIT_JITTER};
pub use trapping::{trapping_region_check, TrapCheckReport, TrappingRegion};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("orbit diverged at step {step} (norm {norm:e})")]
    OrbitDiverged { step: usize, norm: f64 },
    #[error("derivative undefined at critical point x = {x}")]
    CriticalPoint { x: f64 },
    #[error("point {x} lies outside the map's domain")]
    OutsideDomain { x: f64 },
    #[error("parameter {name} = {value} out of range")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("no real fixed point for a = {a}, b = {b}")]
    NoRealFixedPoint { a: f64, b: f64 },
    #[error("unknown map '{0}'")]
    UnknownMap(String),
}
