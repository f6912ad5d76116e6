//! Gibbs-Markov towers on a base interval.
//!
//! A tower is a finite list of full branches `F = f^tau` on disjoint
//! half-open subintervals of the base, each mapping its domain monotonically
//! onto the whole base. The base carries the normalized Lebesgue measure
//! (the reference measure), and every Jacobian is taken with respect to it.

mod branch;
mod density;
mod entropy;
pub mod file;
mod stats;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;

pub use branch::{Branch, BranchMap, Jacobian};
pub use density::{
    solve_invariant_density, transfer_step, QuotientDensity, SolveMethod, SolveOptions, TransferOperator,
};
pub use entropy::{entropy, entropy_with, IntegrationMeasure};
pub use stats::{
    consecutive_returns, deep_return_bound_check, reference_histogram, return_time_stats, saturation_profile,
    separation_time, tail_sum, BoundReport, ReturnTimeStats, Separation,
};
pub use validate::{audit_tower, validate_tower, AxiomCheck, ValidationReport};

pub const DEFAULT_R_MAX: u32 = 64;
pub const DEFAULT_GRID: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TowerError {
    #[error("branches {first} and {second} overlap by {overlap:e}")]
    OverlappingBranches { first: usize, second: usize, overlap: f64 },
    #[error("branch {index} maps onto [{image_lo}, {image_hi}], not the base")]
    NonSurjectiveBranch { index: usize, image_lo: f64, image_hi: f64 },
    #[error("branch lengths plus unassigned mass miss the base length by {discrepancy:e}")]
    MassLeak { discrepancy: f64 },
    #[error("density has {found} cells, operator expects {expected}")]
    GridMismatch { expected: usize, found: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("density range [{min}, {max}] escapes [1/K, K] with K = {k}")]
    BoundViolation { min: f64, max: f64, k: f64 },
    #[error("jacobian of branch {branch} is {value} at x = {x}")]
    NonpositiveJacobian { branch: usize, x: f64, value: f64 },
    #[error("point {x} is not in any branch domain")]
    PointOutsideStructure { x: f64 },
    #[error("orbit leaves the branch domains at induced step {step} (x = {x})")]
    OrbitEscapesStructure { step: usize, x: f64 },
    #[error("budget constant {field} = {value} out of range")]
    InvalidBudget { field: &'static str, value: f64 },
    #[error("invalid tower: {0}")]
    Invalid(String),
}

/// Distortion constants of a tower.
///
/// `k` is always `exp(c1 / (1 - beta))`; it is recomputed, never stored
/// independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionBudget {
    pub c: f64,
    pub beta: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// Set when the constants were fitted from samples rather than supplied.
    pub empirical: bool,
}

impl DistortionBudget {
    pub fn new(c: f64, beta: f64, c0: f64, c1: f64, c2: f64) -> Result<Self, TowerError> {
        let b = DistortionBudget {
            c,
            beta,
            c0,
            c1,
            c2,
            empirical: false,
        };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<(), TowerError> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(TowerError::InvalidBudget {
                field: "beta",
                value: self.beta,
            });
        }
        for (field, value) in [("C", self.c), ("C0", self.c0), ("C1", self.c1), ("C2", self.c2)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(TowerError::InvalidBudget { field, value });
            }
        }
        if self.c2 < 2.0 * self.c {
            return Err(TowerError::InvalidBudget {
                field: "C2",
                value: self.c2,
            });
        }
        Ok(())
    }

    pub fn k(&self) -> f64 {
        (self.c1 / (1.0 - self.beta)).exp()
    }
}

/// Truncated Gibbs-Markov tower. Branches are kept sorted by left endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsMarkovTower {
    base: Interval,
    branches: Vec<Branch>,
    r_max: u32,
    /// Lebesgue length of the base not covered by any branch.
    unassigned_mass: f64,
    budget: DistortionBudget,
}

impl GibbsMarkovTower {
    pub fn new(
        base: Interval,
        mut branches: Vec<Branch>,
        r_max: u32,
        unassigned_mass: f64,
        budget: DistortionBudget,
    ) -> Result<Self, TowerError> {
        if !(base.lo.is_finite() && base.hi.is_finite() && base.len() > 0.0) {
            return Err(TowerError::Invalid(format!("base {base} is empty or not finite")));
        }
        if r_max == 0 {
            return Err(TowerError::Invalid("R_max must be positive".into()));
        }
        if !(unassigned_mass >= 0.0 && unassigned_mass.is_finite()) {
            return Err(TowerError::Invalid(format!(
                "unassigned mass {unassigned_mass} must be nonnegative"
            )));
        }
        budget.check()?;
        for (i, b) in branches.iter().enumerate() {
            if !(b.domain.lo.is_finite() && b.domain.hi.is_finite() && b.domain.len() > 0.0) {
                return Err(TowerError::Invalid(format!("branch {i} has empty domain {}", b.domain)));
            }
            if b.domain.lo < base.lo || b.domain.hi > base.hi {
                return Err(TowerError::Invalid(format!(
                    "branch {i} domain {} leaves the base {base}",
                    b.domain
                )));
            }
            if b.return_time == 0 || b.return_time > r_max {
                return Err(TowerError::Invalid(format!(
                    "branch {i} return time {} outside 1..={r_max}",
                    b.return_time
                )));
            }
            if let BranchMap::Composed { itinerary, .. } = &b.map {
                if itinerary.len() != b.return_time as usize {
                    return Err(TowerError::Invalid(format!(
                        "branch {i}: itinerary length {} differs from return time {}",
                        itinerary.len(),
                        b.return_time
                    )));
                }
            }
        }
        branches.sort_by(|a, b| a.domain.lo.total_cmp(&b.domain.lo));
        Ok(GibbsMarkovTower {
            base,
            branches,
            r_max,
            unassigned_mass,
            budget,
        })
    }

    /// Builds a tower whose unassigned mass is the uncovered part of the base.
    pub fn with_uncovered_mass(
        base: Interval,
        branches: Vec<Branch>,
        r_max: u32,
        budget: DistortionBudget,
    ) -> Result<Self, TowerError> {
        let covered: f64 = branches.iter().map(|b| b.domain.len()).sum();
        Self::new(base, branches, r_max, (base.len() - covered).max(0.0), budget)
    }

    pub fn base(&self) -> Interval {
        self.base
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn r_max(&self) -> u32 {
        self.r_max
    }

    pub fn unassigned_mass(&self) -> f64 {
        self.unassigned_mass
    }

    pub fn budget(&self) -> &DistortionBudget {
        &self.budget
    }

    pub fn with_budget(mut self, budget: DistortionBudget) -> Result<Self, TowerError> {
        budget.check()?;
        self.budget = budget;
        Ok(self)
    }

    /// Reference-measure mass of branch `i`.
    pub fn reference_mass(&self, i: usize) -> f64 {
        self.branches[i].domain.len() / self.base.len()
    }

    /// Index of the branch whose domain contains `x`.
    pub fn branch_index(&self, x: f64) -> Option<usize> {
        let idx = self.branches.partition_point(|b| b.domain.lo <= x);
        if idx == 0 {
            return None;
        }
        let i = idx - 1;
        self.branches[i].domain.contains(x).then_some(i)
    }

    /// Applies the induced map; `None` if `x` is in the unassigned set.
    pub fn induced(&self, x: f64) -> Option<(usize, f64)> {
        let i = self.branch_index(x)?;
        Some((i, self.branches[i].eval(x)))
    }

    /// Number of branches for each return time.
    pub fn per_time_counts(&self) -> std::collections::BTreeMap<u32, usize> {
        let mut m = std::collections::BTreeMap::new();
        for b in &self.branches {
            *m.entry(b.return_time).or_insert(0) += 1;
        }
        m
    }

    /// Fits a budget from sampled distortion; see [`DistortionBudget::fit`].
    pub fn fit_budget(&self, beta: f64, samples_per_branch: usize) -> Result<DistortionBudget, TowerError> {
        DistortionBudget::fit(self, beta, samples_per_branch)
    }
}

impl DistortionBudget {
    /// Empirical budget for `tower`.
    ///
    /// `C0` is the smallest constant with `|log JF(x)/JF(y)| <= C0 beta^s(Fx, Fy)`
    /// over sampled pairs; `C1 = max(1, C0 / (1 - beta))` (iterates sum the
    /// geometric series, and the deep-return inequality needs `C1 >= 1`);
    /// `C = C0 / 2`; `C2 = max(2C, max log JF / tau)`.
    pub fn fit(tower: &GibbsMarkovTower, beta: f64, samples_per_branch: usize) -> Result<Self, TowerError> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(TowerError::InvalidBudget {
                field: "beta",
                value: beta,
            });
        }
        let mut c0: f64 = 0.0;
        let mut growth: f64 = 0.0;
        for (i, b) in tower.branches.iter().enumerate() {
            let pts = validate::sample_points(b, samples_per_branch.max(2));
            let logs = validate::log_jacobians(i, b, &pts)?;
            for &l in &logs {
                growth = growth.max(l / f64::from(b.return_time));
            }
            for j in 0..pts.len() {
                for k in j + 1..pts.len() {
                    let s = validate::image_separation(tower, b, pts[j], pts[k]);
                    c0 = c0.max((logs[j] - logs[k]).abs() / beta.powi(s as i32));
                }
            }
        }
        let c = 0.5 * c0;
        let c1 = (c0 / (1.0 - beta)).max(1.0);
        let c2 = (2.0 * c).max(growth);
        let mut budget = DistortionBudget::new(c, beta, c0, c1, c2)?;
        budget.empirical = true;
        Ok(budget)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, five points.
pub(crate) const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// `int_a^b g(x) dx` by five-point Gauss-Legendre.
pub(crate) fn gauss5(a: f64, b: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    GAUSS5.iter().map(|&(t, w)| w * g(m + h * t)).sum::<f64>() * h
}
