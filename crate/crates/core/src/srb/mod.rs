//! Physical measures along orbits, Lyapunov exponents, and saturation of
//! induced invariant measures.

mod lyapunov;
mod measure;
mod saturation;

use thiserror::Error;

use crate::models::MapError;
use crate::tower::TowerError;

pub use lyapunov::{lyapunov_spectrum, LyapunovEstimate, LyapunovOptions, BLOCKS, MIN_STEPS};
pub use measure::{birkhoff_average, empirical_measure, Bounds, EmpiricalMeasure, MeasureHeader, OrbitOptions};
pub use saturation::{
    induced_lyapunov_check, pesin_defect, saturate_measure, PesinReport, RelationOptions, RelationReport, Saturation,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SrbError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Tower(#[from] TowerError),
    #[error("tangent vectors collapsed at step {step}; renormalize more often")]
    DegenerateTangent { step: usize },
    #[error("branch {branch} is not an iterate of the map: {detail}")]
    TowerMapMismatch { branch: usize, detail: String },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        self.comp += if self.sum.abs() >= v.abs() {
            (self.sum - t) + v
        } else {
            (v - t) + self.sum
        };
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
