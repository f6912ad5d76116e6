use serde::{Deserialize, Serialize};

use super::lyapunov::{lyapunov_spectrum, LyapunovOptions};
use super::measure::{Bounds, EmpiricalMeasure};
use super::SrbError;
use crate::interval::Interval;
use crate::models::{iterate, Map1D, Noise, System, ORBIT_JITTER};
use crate::rng::rng_from_seed;
use crate::tower::{entropy, return_time_stats, BranchMap, GibbsMarkovTower, QuotientDensity, TowerError};

/// Spread of the induced invariant measure over the levels of the tower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    /// Normalized measure on the map's domain.
    pub measure: EmpiricalMeasure,
    /// Total mass of the level sum before normalization.
    pub level_mass: f64,
    /// `int R d(mu)` from the return-time statistics.
    pub sigma: f64,
    /// Invariant mass on the base without a retained branch; not transported.
    pub truncated_mass: f64,
}

/// Checks that every branch is `map` iterated `tau` times.
fn check_branches(tower: &GibbsMarkovTower, map: &Map1D) -> Result<(), SrbError> {
    let sys = System::Interval(*map);
    for (i, b) in tower.branches().iter().enumerate() {
        let mismatch = |detail: String| SrbError::TowerMapMismatch { branch: i, detail };
        match &b.map {
            BranchMap::Composed { map: m, itinerary } => {
                if m != map {
                    return Err(mismatch(format!("composed from {m}, expected {map}")));
                }
                if itinerary.len() != b.return_time as usize {
                    return Err(mismatch(format!(
                        "{} laps for return time {}",
                        itinerary.len(),
                        b.return_time
                    )));
                }
            }
            _ if b.return_time > 1 => {
                return Err(mismatch("levels above the base need a composed branch map".into()));
            }
            _ => {}
        }
        for t in [0.125, 0.5, 0.875] {
            let x = b.domain.from_unit(t);
            let direct = iterate(&sys, [x, 0.0], b.return_time as usize)?[0];
            let tol = 1e-10_f64.max(b.rounding_bound(x) * 16.0);
            if (direct - b.eval(x)).abs() > tol {
                return Err(mismatch(format!(
                    "f^{}({x}) = {direct}, branch gives {}",
                    b.return_time,
                    b.eval(x)
                )));
            }
        }
    }
    Ok(())
}

/// `mu* = sum_l f^l_*(mu|{R > l})` on a `grid`-cell histogram of the map's
/// domain, normalized by its total mass.
pub fn saturate_measure(
    tower: &GibbsMarkovTower,
    density: &QuotientDensity,
    map: &Map1D,
    grid: usize,
) -> Result<Saturation, SrbError> {
    if grid == 0 {
        return Err(SrbError::Invalid("grid must be positive".into()));
    }
    check_branches(tower, map)?;
    let dom = map.domain();
    let h = dom.len() / grid as f64;
    let base = tower.base();
    let cum = density.cumulative();
    let mut weights = vec![0.0; grid];

    for b in tower.branches() {
        for l in 0..b.return_time as usize {
            let image = Interval::spanning(
                b.partial(l, b.domain.lo).expect("composed"),
                b.partial(l, b.domain.hi).expect("composed"),
            );
            let first = (((image.lo - dom.lo) / h).floor().max(0.0) as usize).min(grid - 1);
            let last = (((image.hi - dom.lo) / h).ceil() as usize).clamp(first + 1, grid);
            for (j, w) in weights.iter_mut().enumerate().take(last).skip(first) {
                let cell = Interval::new(dom.lo + j as f64 * h, dom.lo + (j + 1) as f64 * h);
                let (lo, hi) = (cell.lo.clamp(image.lo, image.hi), cell.hi.clamp(image.lo, image.hi));
                if hi <= lo {
                    continue;
                }
                let pre = Interval::spanning(
                    b.partial_inverse(l, lo).expect("composed"),
                    b.partial_inverse(l, hi).expect("composed"),
                );
                let Some(pre) = pre.intersect(&b.domain) else {
                    continue;
                };
                *w += cum.mass(base, pre);
            }
        }
    }

    let level_mass: f64 = weights.iter().sum();
    let stats = return_time_stats(tower, density);
    let measure = EmpiricalMeasure::from_weights(1, Bounds::interval(dom.lo, dom.hi), grid, weights)?;
    Ok(Saturation {
        measure,
        level_mass,
        sigma: stats.sigma,
        truncated_mass: stats.truncated_invariant_mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationOptions {
    /// Induced steps for `lambda_F`; steps of `f` for `lambda_f`.
    pub n: usize,
    pub seed: u64,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for RelationOptions {
    fn default() -> Self {
        RelationOptions {
            n: 1_000_000,
            seed: 0,
            abs_tol: 1e-3,
            rel_tol: 0.02,
        }
    }
}

/// Comparison of the induced exponent with `sigma` times the exponent of `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub lambda_induced: f64,
    pub lambda_map: f64,
    pub sigma: f64,
    /// `|lambda_induced - sigma * lambda_map|`.
    pub defect: f64,
    pub relative_defect: f64,
    /// Mean return time along the induced orbit.
    pub orbit_sigma: f64,
    pub n: usize,
    pub seed: u64,
    pub pass: bool,
}

/// Induced-orbit average of `log JF` from `x0`, with the same jitter as
/// [`crate::models::SampledOrbit`]. Returns it with the mean return time.
fn induced_exponent(tower: &GibbsMarkovTower, x0: f64, n: usize, seed: u64) -> Result<(f64, f64), TowerError> {
    use rand::Rng as _;
    let mut rng = rng_from_seed(seed);
    let base = tower.base();
    let (mut x, mut sum, mut steps) = (x0, 0.0, 0u64);
    for step in 0..n {
        let i = tower
            .branch_index(x)
            .ok_or(TowerError::OrbitEscapesStructure { step, x })?;
        let b = &tower.branches()[i];
        let jac = b.jacobian(x);
        if !(jac > 0.0) {
            return Err(TowerError::NonpositiveJacobian {
                branch: i,
                x,
                value: jac,
            });
        }
        sum += jac.ln();
        steps += u64::from(b.return_time);
        x = b.eval(x);
        // evaluating a branch with derivative `jac` loses about log2(jac) low bits
        let y = x + ORBIT_JITTER * base.len() * jac.max(1.0) * rng.random_range(-1.0..1.0);
        if base.contains(y) {
            x = y;
        }
    }
    Ok((sum / n as f64, steps as f64 / n as f64))
}

/// Lyapunov exponent of the induced map against `sigma` times that of `f`.
pub fn induced_lyapunov_check(
    tower: &GibbsMarkovTower,
    density: &QuotientDensity,
    map: &Map1D,
    x0: f64,
    opts: &RelationOptions,
) -> Result<RelationReport, SrbError> {
    check_branches(tower, map)?;
    let (lambda_induced, orbit_sigma) = induced_exponent(tower, x0, opts.n, opts.seed)?;
    let lopts = LyapunovOptions {
        n: opts.n.max(super::lyapunov::MIN_STEPS),
        seed: opts.seed.wrapping_add(1),
        noise: Noise::Jitter,
        ..LyapunovOptions::default()
    };
    let lambda_map = lyapunov_spectrum(&System::Interval(*map), [x0, 0.0], &lopts)?.lambda1;
    let sigma = return_time_stats(tower, density).sigma;
    let defect = (lambda_induced - sigma * lambda_map).abs();
    let relative_defect = defect / lambda_induced.abs();
    Ok(RelationReport {
        lambda_induced,
        lambda_map,
        sigma,
        defect,
        relative_defect,
        orbit_sigma,
        n: opts.n,
        seed: opts.seed,
        pass: defect <= opts.abs_tol.max(opts.rel_tol * lambda_induced.abs()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PesinReport {
    pub entropy: f64,
    pub lambda1: f64,
    pub ci_halfwidth: f64,
    /// `|entropy - lambda1|`.
    pub defect: f64,
}

/// Tower entropy against the Lyapunov exponent of `map` along the orbit of `x0`.
pub fn pesin_defect(
    map: &Map1D,
    tower: &GibbsMarkovTower,
    density: &QuotientDensity,
    x0: f64,
    opts: &LyapunovOptions,
) -> Result<PesinReport, SrbError> {
    let h = entropy(tower, density)?;
    let ly = lyapunov_spectrum(&System::Interval(*map), [x0, 0.0], opts)?;
    Ok(PesinReport {
        entropy: h,
        lambda1: ly.lambda1,
        ci_halfwidth: ly.ci_halfwidth,
        defect: (h - ly.lambda1).abs(),
    })
}
