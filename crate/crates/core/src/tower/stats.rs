use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::density::QuotientDensity;
use super::{GibbsMarkovTower, TowerError};
use crate::rng::rng_from_seed;

/// Reference-measure mass of `{R = j}` for each return time `j`.
pub fn reference_histogram(tower: &GibbsMarkovTower) -> BTreeMap<u32, f64> {
    let mut h = BTreeMap::new();
    for (i, b) in tower.branches().iter().enumerate() {
        *h.entry(b.return_time).or_insert(0.0) += tower.reference_mass(i);
    }
    h
}

/// `sum_{j >= n} j * mass{R = j}`.
pub fn tail_sum(histogram: &BTreeMap<u32, f64>, n: u32) -> f64 {
    histogram.range(n..).map(|(&j, &m)| f64::from(j) * m).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnTimeStats {
    /// Reference mass per return time.
    pub histogram: BTreeMap<u32, f64>,
    /// Invariant mass per return time.
    pub invariant_histogram: BTreeMap<u32, f64>,
    /// `int R d(mu)` over the retained branches.
    pub sigma: f64,
    pub r_max: u32,
    /// Reference mass without a retained branch (return time beyond `r_max`
    /// or never detected).
    pub truncated_reference_mass: f64,
    /// Invariant mass without a retained branch.
    pub truncated_invariant_mass: f64,
}

impl ReturnTimeStats {
    /// Reference-measure tail `sum_{j >= n} j * mass{R = j}`.
    pub fn tail(&self, n: u32) -> f64 {
        tail_sum(&self.histogram, n)
    }
}

fn invariant_masses(tower: &GibbsMarkovTower, density: &QuotientDensity) -> Vec<f64> {
    let cum = density.cumulative();
    let base = tower.base();
    tower.branches().iter().map(|b| cum.mass(base, b.domain)).collect()
}

pub fn return_time_stats(tower: &GibbsMarkovTower, density: &QuotientDensity) -> ReturnTimeStats {
    let masses = invariant_masses(tower, density);
    let mut invariant_histogram = BTreeMap::new();
    let mut sigma = 0.0;
    for (b, &m) in tower.branches().iter().zip(&masses) {
        *invariant_histogram.entry(b.return_time).or_insert(0.0) += m;
        sigma += f64::from(b.return_time) * m;
    }
    let assigned: f64 = masses.iter().sum();
    ReturnTimeStats {
        histogram: reference_histogram(tower),
        invariant_histogram,
        sigma,
        r_max: tower.r_max(),
        truncated_reference_mass: tower.unassigned_mass() / tower.base().len(),
        truncated_invariant_mass: (density.integral() - assigned).max(0.0),
    }
}

/// `[mu{R > 0}, ..., mu{R > l - 1}]` under the invariant measure. Mass
/// without a retained branch counts as `R > r_max`.
pub fn saturation_profile(tower: &GibbsMarkovTower, density: &QuotientDensity, l: usize) -> Vec<f64> {
    let masses = invariant_masses(tower, density);
    let total = density.integral();
    let unassigned = (total - masses.iter().sum::<f64>()).max(0.0);
    (0..l)
        .map(|level| {
            let retained: f64 = tower
                .branches()
                .iter()
                .zip(&masses)
                .filter(|(b, _)| b.return_time as usize > level)
                .map(|(_, m)| m)
                .sum();
            let beyond = if level <= tower.r_max() as usize {
                unassigned
            } else {
                0.0
            };
            retained + beyond
        })
        .collect()
}

/// Outcome of a separation-time query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Separation {
    /// Induced orbits first lie in distinct branches at this step.
    At(usize),
    /// No split within the cap.
    Capped(usize),
}

impl Separation {
    pub fn steps(self) -> usize {
        match self {
            Separation::At(n) | Separation::Capped(n) => n,
        }
    }
}

/// Smallest `n <= cap` with `F^n x` and `F^n y` in distinct branches. Leaving
/// the branch domains counts as separating.
pub fn separation_time(tower: &GibbsMarkovTower, x: f64, y: f64, cap: usize) -> Result<Separation, TowerError> {
    let bx = tower.branch_index(x).ok_or(TowerError::PointOutsideStructure { x })?;
    let by = tower
        .branch_index(y)
        .ok_or(TowerError::PointOutsideStructure { x: y })?;
    if x == y {
        return Ok(Separation::Capped(cap));
    }
    let (mut x, mut y) = (x, y);
    let (mut ix, mut iy) = (Some(bx), Some(by));
    for n in 0..=cap {
        let i = match (ix, iy) {
            (Some(i), Some(j)) if i == j => i,
            _ => return Ok(Separation::At(n)),
        };
        let b = &tower.branches()[i];
        x = b.eval(x);
        y = b.eval(y);
        ix = tower.branch_index(x);
        iy = tower.branch_index(y);
    }
    Ok(Separation::Capped(cap))
}

/// `[R^1(x), ..., R^k(x)]` along the induced orbit of `x`.
pub fn consecutive_returns(tower: &GibbsMarkovTower, x: f64, k: usize) -> Result<Vec<u32>, TowerError> {
    let mut out = Vec::with_capacity(k);
    let mut x = x;
    for step in 0..k {
        let (i, next) = tower.induced(x).ok_or(TowerError::OrbitEscapesStructure { step, x })?;
        out.push(tower.branches()[i].return_time);
        x = next;
    }
    Ok(out)
}

/// Monte-Carlo comparison of `m{exists t <= k : R^t > n}` with `k C1 m{R > n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k: usize,
    pub n: u32,
    pub n_samples: usize,
    pub seed: u64,
    pub estimate: f64,
    pub std_error: f64,
    /// Same event weighted by the invariant density.
    pub invariant_estimate: f64,
    /// `m{R > n}`, including mass without a retained branch.
    pub tail_mass: f64,
    pub c1: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn deep_return_bound_check(
    tower: &GibbsMarkovTower,
    density: &QuotientDensity,
    k: usize,
    n: u32,
    n_samples: usize,
    seed: u64,
) -> Result<BoundReport, TowerError> {
    if k == 0 || n == 0 || n_samples == 0 {
        return Err(TowerError::Invalid(format!(
            "need k, N, samples >= 1 (got {k}, {n}, {n_samples})"
        )));
    }
    let base = tower.base();
    let tail_mass = tower
        .branches()
        .iter()
        .enumerate()
        .filter(|(_, b)| b.return_time > n)
        .map(|(i, _)| tower.reference_mass(i))
        .sum::<f64>()
        + tower.unassigned_mass() / base.len();
    let mut rng = rng_from_seed(seed);
    let mut hits = 0usize;
    let mut weighted = 0.0;
    let mut weight_total = 0.0;
    for _ in 0..n_samples {
        let x0 = base.from_unit(rng.random::<f64>());
        let mut x = x0;
        let mut deep = false;
        for _ in 0..k {
            match tower.induced(x) {
                Some((i, next)) if tower.branches()[i].return_time <= n => x = next,
                _ => {
                    deep = true;
                    break;
                }
            }
        }
        let w = density.value_at(base, x0);
        weight_total += w;
        if deep {
            hits += 1;
            weighted += w;
        }
    }
    let p = hits as f64 / n_samples as f64;
    let std_error = (p * (1.0 - p) / n_samples as f64).sqrt();
    let c1 = tower.budget().c1;
    let bound = k as f64 * c1 * tail_mass;
    Ok(BoundReport {
        k,
        n,
        n_samples,
        seed,
        estimate: p,
        std_error,
        invariant_estimate: if weight_total > 0.0 {
            weighted / weight_total
        } else {
            0.0
        },
        tail_mass,
        c1,
        bound,
        pass: p <= bound + 3.0 * std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    fn lebesgue(_: &GibbsMarkovTower) -> QuotientDensity {
        QuotientDensity::uniform(1024)
    }

    #[test]
    fn doubling_stats() {
        let t = doubling();
        let s = return_time_stats(&t, &lebesgue(&t));
        assert_eq!(s.sigma, 1.0);
        assert_eq!(s.tail(2), 0.0);
        assert_eq!(saturation_profile(&t, &lebesgue(&t), 4), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn bernoulli_sigma_and_profile() {
        let t = bernoulli();
        let d = lebesgue(&t);
        assert!((return_time_stats(&t, &d).sigma - 1.75).abs() < 1e-15);
        let p = saturation_profile(&t, &d, 5);
        assert_eq!(p, vec![1.0, 0.5, 0.25, 0.0, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.75).abs() < 1e-15);
    }

    #[test]
    fn first_return_geometric_tail() {
        let t = first_return_doubling(50);
        let s = return_time_stats(&t, &lebesgue(&t));
        assert!((s.sigma - 2.0).abs() < 1e-12);
        // sum_{j>=5} j 2^-j = 6 / 16
        assert!((s.tail(5) - 0.375).abs() < 1e-12);
        let p = saturation_profile(&t, &lebesgue(&t), 10);
        for (l, v) in p.iter().enumerate() {
            assert!((v - 0.5f64.powi(l as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_is_nonincreasing() {
        let h = reference_histogram(&first_return_doubling(30));
        let tails: Vec<f64> = (1..35).map(|n| tail_sum(&h, n)).collect();
        assert!(tails.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn separation_examples() {
        let t = doubling();
        assert_eq!(separation_time(&t, 0.1, 0.7, 40).unwrap(), Separation::At(0));
        assert_eq!(separation_time(&t, 0.1, 0.3, 40).unwrap(), Separation::At(1));
        assert_eq!(separation_time(&t, 0.1, 0.1, 40).unwrap(), Separation::Capped(40));
        let fr = first_return_doubling(10);
        assert!(matches!(
            separation_time(&fr, 0.4999999, 0.1, 5),
            Err(TowerError::PointOutsideStructure { .. })
        ));
    }

    #[test]
    fn consecutive_return_examples() {
        let fr = first_return_doubling(30);
        assert_eq!(&consecutive_returns(&fr, 0.3, 2).unwrap()[..2], &[2, 1]);
        assert_eq!(consecutive_returns(&doubling(), 0.37, 5).unwrap(), vec![1; 5]);
        assert_eq!(consecutive_returns(&bernoulli(), 0.8, 1).unwrap(), vec![3]);
        assert!(matches!(
            consecutive_returns(&fr, 0.5 - 1e-12, 1),
            Err(TowerError::OrbitEscapesStructure { step: 0, .. })
        ));
    }

    #[test]
    fn deep_returns_on_doubling_are_zero() {
        let t = doubling();
        let r = deep_return_bound_check(&t, &lebesgue(&t), 1, 1, 1000, 3).unwrap();
        assert_eq!((r.estimate, r.bound), (0.0, 0.0));
        assert!(r.pass);
    }

    #[test]
    fn deep_returns_on_first_return_tower() {
        let t = first_return_doubling(40);
        let d = lebesgue(&t);
        let r1 = deep_return_bound_check(&t, &d, 1, 4, 100_000, 11).unwrap();
        assert!((r1.tail_mass - 0.0625).abs() < 1e-12);
        assert!((r1.estimate - 0.0625).abs() < 4.0 * r1.std_error);
        assert!(r1.pass);
        let r3 = deep_return_bound_check(&t, &d, 3, 4, 100_000, 11).unwrap();
        // 1 - (15/16)^3 under Lebesgue
        assert!((r3.estimate - (1.0 - (15.0f64 / 16.0).powi(3))).abs() < 4.0 * r3.std_error);
        assert!(r3.pass);
    }
}
