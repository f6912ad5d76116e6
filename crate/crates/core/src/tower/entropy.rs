use serde::{Deserialize, Serialize};

use super::density::QuotientDensity;
use super::stats::return_time_stats;
use super::{gauss5, GibbsMarkovTower, TowerError};
use crate::interval::Interval;

/// Measure used in the entropy integral `sigma^-1 int log JF d(.)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMeasure {
    /// `rho dm`, the invariant measure of the induced map.
    #[default]
    Invariant,
    /// `dm` alone.
    Reference,
}

/// Entropy of the saturated measure, integrating against the invariant measure.
pub fn entropy(tower: &GibbsMarkovTower, density: &QuotientDensity) -> Result<f64, TowerError> {
    entropy_with(tower, density, IntegrationMeasure::Invariant)
}

pub fn entropy_with(
    tower: &GibbsMarkovTower,
    density: &QuotientDensity,
    measure: IntegrationMeasure,
) -> Result<f64, TowerError> {
    let sigma = return_time_stats(tower, density).sigma;
    if !(sigma > 0.0) {
        return Err(TowerError::Invalid("tower carries no invariant mass".into()));
    }
    let base = tower.base();
    let g = density.grid();
    let h = base.len() / g as f64;
    let mut total = 0.0;
    for (i, b) in tower.branches().iter().enumerate() {
        let first = ((b.domain.lo - base.lo) / h).floor().max(0.0) as usize;
        let mut bad = None;
        for j in first..g {
            let cell = Interval::new(base.lo + j as f64 * h, base.lo + (j + 1) as f64 * h);
            if cell.lo >= b.domain.hi {
                break;
            }
            let Some(piece) = cell.intersect(&b.domain) else {
                continue;
            };
            let weight = match measure {
                IntegrationMeasure::Invariant => density.values[j],
                IntegrationMeasure::Reference => 1.0,
            };
            let integral = gauss5(piece.lo, piece.hi, |x| {
                let jac = b.jacobian(x);
                if !(jac > 0.0) {
                    bad.get_or_insert((x, jac));
                    return 0.0;
                }
                jac.ln()
            });
            total += weight * integral;
        }
        if let Some((x, value)) = bad {
            return Err(TowerError::NonpositiveJacobian { branch: i, x, value });
        }
    }
    Ok(total / base.len() / sigma)
}
