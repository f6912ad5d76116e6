use serde::{Deserialize, Serialize};

use super::{GibbsMarkovTower, TowerError, DEFAULT_GRID};
use crate::interval::Interval;

/// Piecewise-constant density with respect to the reference measure on a
/// uniform grid over the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientDensity {
    pub values: Vec<f64>,
    /// L1 distance (reference measure) between the density and its
    /// normalized transfer image; zero for densities not produced by a solve.
    pub residual: f64,
    pub iterations: usize,
    /// Mass sent to the unassigned set by the last transfer step.
    pub leaked_mass: f64,
}

impl QuotientDensity {
    pub fn uniform(grid: usize) -> Self {
        Self::from_values(vec![1.0; grid])
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        QuotientDensity {
            values,
            residual: 0.0,
            iterations: 0,
            leaked_mass: 0.0,
        }
    }

    /// Samples `f` at cell midpoints of `base`.
    pub fn from_fn(base: Interval, grid: usize, f: impl Fn(f64) -> f64) -> Self {
        let h = base.len() / grid as f64;
        Self::from_values((0..grid).map(|j| f(base.lo + (j as f64 + 0.5) * h)).collect())
    }

    pub fn grid(&self) -> usize {
        self.values.len()
    }

    /// `int rho dm`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.grid() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value on the cell containing `x`.
    pub fn value_at(&self, base: Interval, x: f64) -> f64 {
        let g = self.grid();
        let j = ((base.to_unit(x) * g as f64).floor().max(0.0) as usize).min(g - 1);
        self.values[j]
    }

    /// `L1(m)` distance to another density on the same grid.
    pub fn l1_distance(&self, other: &QuotientDensity) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.grid() as f64
    }

    pub(crate) fn cumulative(&self) -> Cumulative<'_> {
        let g = self.grid();
        let mut c = Vec::with_capacity(g + 1);
        let mut acc = 0.0;
        c.push(0.0);
        for v in &self.values {
            acc += v / g as f64;
            c.push(acc);
        }
        Cumulative {
            c,
            values: &self.values,
        }
    }
}

/// Distribution function of a piecewise-constant density in unit coordinates.
pub(crate) struct Cumulative<'a> {
    c: Vec<f64>,
    values: &'a [f64],
}

impl Cumulative<'_> {
    /// Mass of `[0, t]` for `t` in unit coordinates of the base.
    #[inline]
    pub(crate) fn at(&self, t: f64) -> f64 {
        let g = self.values.len();
        let s = (t * g as f64).clamp(0.0, g as f64);
        let j = (s.floor() as usize).min(g - 1);
        self.c[j] + (s - j as f64) * self.values[j] / g as f64
    }

    /// Mass of the subinterval `iv` of `base`.
    pub(crate) fn mass(&self, base: Interval, iv: Interval) -> f64 {
        self.at(base.to_unit(iv.hi)) - self.at(base.to_unit(iv.lo))
    }
}

/// Discretized transfer operator of a tower on a uniform grid.
///
/// Cell `j` of the image receives, from each branch, the mass the density
/// puts on the branch preimage of cell `j`. This conserves mass exactly up to
/// what falls on the unassigned set.
pub struct TransferOperator<'a> {
    tower: &'a GibbsMarkovTower,
    grid: usize,
    /// Per branch, preimages of the `grid + 1` grid points in unit coordinates.
    preimages: Vec<Vec<f64>>,
}

impl<'a> TransferOperator<'a> {
    pub fn new(tower: &'a GibbsMarkovTower, grid: usize) -> Self {
        assert!(grid > 0, "grid must be positive");
        let base = tower.base();
        let preimages = tower
            .branches()
            .iter()
            .map(|b| {
                (0..=grid)
                    .map(|j| base.to_unit(b.inverse(base.from_unit(j as f64 / grid as f64))))
                    .collect()
            })
            .collect();
        TransferOperator { tower, grid, preimages }
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn tower(&self) -> &GibbsMarkovTower {
        self.tower
    }

    /// One application of the transfer operator, without renormalization.
    pub fn apply(&self, density: &QuotientDensity) -> Result<QuotientDensity, TowerError> {
        if density.grid() != self.grid {
            return Err(TowerError::GridMismatch {
                expected: self.grid,
                found: density.grid(),
            });
        }
        let cum = density.cumulative();
        let g = self.grid as f64;
        let mut out = vec![0.0; self.grid];
        let mut mass = vec![0.0; self.grid + 1];
        for pre in &self.preimages {
            for (m, &t) in mass.iter_mut().zip(pre) {
                *m = cum.at(t);
            }
            for (o, w) in out.iter_mut().zip(mass.windows(2)) {
                *o += g * (w[1] - w[0]).abs();
            }
        }
        let result = QuotientDensity::from_values(out);
        let leaked = density.integral() - result.integral();
        Ok(QuotientDensity {
            leaked_mass: leaked,
            ..result
        })
    }
}

/// Single transfer step on a fresh operator.
pub fn transfer_step(tower: &GibbsMarkovTower, density: &QuotientDensity) -> Result<QuotientDensity, TowerError> {
    TransferOperator::new(tower, density.grid()).apply(density)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Iterate the operator and renormalize.
    #[default]
    Power,
    /// Average the iterates of the reference measure.
    Cesaro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
    /// The operator is iterated on `grid * refine` cells and the result
    /// averaged back onto `grid` cells.
    pub refine: usize,
    /// Skip the `[1/K, K]` check.
    pub skip_bounds: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            grid: DEFAULT_GRID,
            tol: 1e-10,
            max_iter: 100_000,
            method: SolveMethod::Power,
            refine: 16,
            skip_bounds: false,
        }
    }
}

fn normalized(mut d: QuotientDensity) -> QuotientDensity {
    let z = d.integral();
    if z > 0.0 {
        d.values.iter_mut().for_each(|v| *v /= z);
    }
    d
}

/// Invariant density of the induced map, normalized to a probability.
///
/// The reported residual is measured on the refined grid.
pub fn solve_invariant_density(tower: &GibbsMarkovTower, opts: &SolveOptions) -> Result<QuotientDensity, TowerError> {
    if !(opts.tol > 0.0) {
        return Err(TowerError::Invalid(format!("tolerance {} must be positive", opts.tol)));
    }
    if opts.grid == 0 || opts.refine == 0 {
        return Err(TowerError::Invalid("grid and refine must be positive".into()));
    }
    let fine = opts.grid * opts.refine;
    let op = TransferOperator::new(tower, fine);
    let mut rho = QuotientDensity::uniform(fine);
    let mut residual = f64::INFINITY;
    let mut leaked = 0.0;
    let mut iterations = 0;
    match opts.method {
        SolveMethod::Power => {
            while iterations < opts.max_iter {
                iterations += 1;
                let next = op.apply(&rho)?;
                leaked = next.leaked_mass;
                let next = normalized(next);
                residual = next.l1_distance(&rho);
                rho = next;
                if residual <= opts.tol {
                    break;
                }
            }
        }
        SolveMethod::Cesaro => {
            let mut iterate = rho.clone();
            let mut sum = rho.values.clone();
            while iterations < opts.max_iter {
                iterations += 1;
                iterate = op.apply(&iterate)?;
                for (s, v) in sum.iter_mut().zip(&iterate.values) {
                    *s += v;
                }
                if iterations % 16 == 0 || iterations == opts.max_iter {
                    let avg = normalized(QuotientDensity::from_values(sum.clone()));
                    let image = op.apply(&avg)?;
                    leaked = image.leaked_mass;
                    residual = normalized(image).l1_distance(&avg);
                    rho = avg;
                    if residual <= opts.tol {
                        break;
                    }
                }
            }
        }
    }
    if !(residual <= opts.tol) {
        return Err(TowerError::NoConvergence { iterations, residual });
    }
    let values = rho
        .values
        .chunks(opts.refine)
        .map(|c| c.iter().sum::<f64>() / opts.refine as f64)
        .collect();
    let out = QuotientDensity {
        values,
        residual,
        iterations,
        leaked_mass: leaked,
    };
    if !opts.skip_bounds {
        let k = tower.budget().k();
        let (lo, hi) = (out.min(), out.max());
        if lo < 1.0 / k - opts.tol || hi > k + opts.tol {
            return Err(TowerError::BoundViolation { min: lo, max: hi, k });
        }
    }
    Ok(out)
}
