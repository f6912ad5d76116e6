use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::interval::Interval;

use super::{gauss5, Branch, DistortionBudget, GibbsMarkovTower, TowerError};

/// Separation times are followed at most this many induced steps when
/// sampling distortion.
const SEPARATION_CAP: usize = 40;
const DISTORTION_TOL: f64 = 1e-9;
const CHANGE_OF_VARIABLES_RTOL: f64 = 1e-6;
const SURJECTIVITY_RTOL: f64 = 1e-9;
const MASS_TOL: f64 = 1e-12;

/// One checked axiom. Positive `margin` is slack, negative is the size of the
/// violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub axiom: String,
    pub pass: bool,
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<AxiomCheck>,
    /// Number of branches per return time.
    pub per_time_counts: BTreeMap<u32, usize>,
    pub samples_per_branch: usize,
    pub budget: DistortionBudget,
    pub k: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, axiom: &str) -> Option<&AxiomCheck> {
        self.checks.iter().find(|c| c.axiom == axiom)
    }
}

pub(crate) fn sample_points(b: &Branch, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| b.domain.from_unit((k as f64 + 0.5) / n as f64))
        .collect()
}

pub(crate) fn log_jacobians(index: usize, b: &Branch, pts: &[f64]) -> Result<Vec<f64>, TowerError> {
    pts.iter()
        .map(|&x| {
            let j = b.jacobian(x);
            if j > 0.0 && j.is_finite() {
                Ok(j.ln())
            } else {
                Err(TowerError::NonpositiveJacobian {
                    branch: index,
                    x,
                    value: j,
                })
            }
        })
        .collect()
}

/// Number of induced steps before `x` and `y` fall in different branches
/// (or leave the structure), capped.
pub(crate) fn separation_steps(tower: &GibbsMarkovTower, mut x: f64, mut y: f64, cap: usize) -> usize {
    for n in 0..cap {
        match (tower.branch_index(x), tower.branch_index(y)) {
            (Some(i), Some(j)) if i == j => {
                let b = &tower.branches()[i];
                x = b.eval(x);
                y = b.eval(y);
            }
            _ => return n,
        }
    }
    cap
}

/// Separation time of the images of two points of branch `b`.
pub(crate) fn image_separation(tower: &GibbsMarkovTower, b: &Branch, x: f64, y: f64) -> usize {
    separation_steps(tower, b.eval(x), b.eval(y), SEPARATION_CAP)
}

/// Image of the closed domain, its distance from the base, and the allowed
/// distance given the rounding in the branch evaluation.
fn surjectivity(base: Interval, b: &Branch) -> (f64, f64, f64, f64) {
    let (a, c) = (b.eval(b.domain.lo), b.eval(b.domain.hi));
    let (lo, hi) = (a.min(c), a.max(c));
    let err = (lo - base.lo).abs().max((hi - base.hi).abs());
    let cond = |x: f64| b.derivative(x).abs() * x.abs().max(1.0);
    let rounding = |x: f64| 16.0 * f64::EPSILON * f64::from(b.return_time) * cond(x) + 4.0 * b.rounding_bound(x);
    (
        lo,
        hi,
        err,
        SURJECTIVITY_RTOL * base.len() + rounding(b.domain.lo) + rounding(b.domain.hi),
    )
}

fn check(axiom: &str, margin: f64, detail: String) -> AxiomCheck {
    AxiomCheck {
        axiom: axiom.to_string(),
        pass: margin >= 0.0,
        margin,
        detail,
    }
}

/// Runs every axiom check and reports all of them, failing or not.
///
/// Only a nonpositive sampled Jacobian aborts the audit.
pub fn audit_tower(tower: &GibbsMarkovTower, samples_per_branch: usize) -> Result<ValidationReport, TowerError> {
    let n = samples_per_branch.max(2);
    let base = tower.base();
    let branches = tower.branches();
    let budget = *tower.budget();
    let mut checks = Vec::new();

    // disjointness: domains are sorted by left endpoint
    let mut gap = base.len();
    let mut worst = String::from("no adjacent branches");
    let mut reach: Option<(usize, f64)> = None;
    for (i, b) in branches.iter().enumerate() {
        if let Some((j, hi)) = reach {
            let g = b.domain.lo - hi;
            if g < gap {
                gap = g;
                worst = format!("branches {j} and {i}");
            }
        }
        if reach.is_none_or(|(_, hi)| b.domain.hi > hi) {
            reach = Some((i, b.domain.hi));
        }
    }
    checks.push(check("disjointness", gap, worst));

    // Markov surjectivity: each branch maps its domain onto the base
    let mut margin = f64::INFINITY;
    let mut detail = String::new();
    for (i, b) in branches.iter().enumerate() {
        let (lo, hi, err, allowance) = surjectivity(base, b);
        if allowance - err < margin {
            margin = allowance - err;
            detail = format!("branch {i} image [{lo:?}, {hi:?}]");
        }
    }
    if branches.is_empty() {
        margin = 0.0;
        detail = "no branches".into();
    }
    checks.push(check("markov_surjectivity", margin, detail));

    // mass accounting
    let covered: f64 = branches.iter().map(|b| b.domain.len()).sum();
    let disc = covered + tower.unassigned_mass() - base.len();
    checks.push(check(
        "mass_accounting",
        MASS_TOL * base.len().max(1.0) - disc.abs(),
        format!(
            "covered {covered:?} + unassigned {:?} vs base {:?}",
            tower.unassigned_mass(),
            base.len()
        ),
    ));

    // change of variables: int_domain JF dLeb = Leb(base)
    let mut margin = f64::INFINITY;
    let mut detail = String::new();
    for (i, b) in branches.iter().enumerate() {
        let pieces = 64;
        let h = b.domain.len() / pieces as f64;
        let integral: f64 = (0..pieces)
            .map(|k| {
                let a = b.domain.lo + k as f64 * h;
                gauss5(a, a + h, |x| b.jacobian(x))
            })
            .sum();
        let rel = (integral / base.len() - 1.0).abs();
        if CHANGE_OF_VARIABLES_RTOL - rel < margin {
            margin = CHANGE_OF_VARIABLES_RTOL - rel;
            detail = format!("branch {i}: int JF dLeb = {integral:?}");
        }
    }
    if branches.is_empty() {
        margin = 0.0;
    }
    checks.push(check("change_of_variables", margin, detail));

    // sampled distortion and Jacobian growth
    let mut dist_margin = f64::INFINITY;
    let mut dist_detail = String::new();
    let mut growth_margin = f64::INFINITY;
    let mut growth_detail = String::new();
    for (i, b) in branches.iter().enumerate() {
        let pts = sample_points(b, n);
        let logs = log_jacobians(i, b, &pts)?;
        for (j, &l) in logs.iter().enumerate() {
            let m = budget.c2 * f64::from(b.return_time) - l;
            if m < growth_margin {
                growth_margin = m;
                growth_detail = format!("branch {i} at x = {:?}: log JF = {l:?}", pts[j]);
            }
        }
        for j in 0..n {
            for k in j + 1..n {
                let s = image_separation(tower, b, pts[j], pts[k]);
                let bound = budget.c0 * budget.beta.powi(s as i32) + DISTORTION_TOL;
                let m = bound - (logs[j] - logs[k]).abs();
                if m < dist_margin {
                    dist_margin = m;
                    dist_detail = format!("branch {i}, x = {:?}, y = {:?}, s = {s}", pts[j], pts[k]);
                }
            }
        }
    }
    if branches.is_empty() {
        dist_margin = 0.0;
        growth_margin = 0.0;
    }
    checks.push(check("distortion", dist_margin, dist_detail));
    checks.push(check("jacobian_growth", growth_margin, growth_detail));

    Ok(ValidationReport {
        checks,
        per_time_counts: tower.per_time_counts(),
        samples_per_branch: n,
        budget,
        k: budget.k(),
    })
}

/// Audits the tower and turns structural failures (overlap, non-surjective
/// branch, mass leak) into errors. Sampled distortion failures stay in the
/// report.
pub fn validate_tower(tower: &GibbsMarkovTower, samples_per_branch: usize) -> Result<ValidationReport, TowerError> {
    let report = audit_tower(tower, samples_per_branch)?;
    let failed = |name| report.check(name).is_some_and(|c| !c.pass);
    let branches = tower.branches();
    if failed("disjointness") {
        let mut reach: (usize, f64) = (0, f64::NEG_INFINITY);
        for (i, b) in branches.iter().enumerate() {
            if b.domain.lo < reach.1 {
                return Err(TowerError::OverlappingBranches {
                    first: reach.0,
                    second: i,
                    overlap: reach.1 - b.domain.lo,
                });
            }
            if b.domain.hi > reach.1 {
                reach = (i, b.domain.hi);
            }
        }
    }
    if failed("markov_surjectivity") {
        let base = tower.base();
        for (i, b) in branches.iter().enumerate() {
            let (lo, hi, err, allowance) = surjectivity(base, b);
            if err > allowance {
                return Err(TowerError::NonSurjectiveBranch {
                    index: i,
                    image_lo: lo,
                    image_hi: hi,
                });
            }
        }
        return Err(TowerError::NonSurjectiveBranch {
            index: 0,
            image_lo: f64::NAN,
            image_hi: f64::NAN,
        });
    }
    if let Some(c) = report.check("mass_accounting").filter(|c| !c.pass) {
        return Err(TowerError::MassLeak {
            discrepancy: -c.margin + MASS_TOL * tower.base().len().max(1.0),
        });
    }
    Ok(report)
}
