use serde::{Deserialize, Serialize};

use super::{KahanSum, SrbError};
use crate::expr::{Expr, Point};
use crate::models::{Noise, Point2, SampledOrbit, System};

/// Burn-in, sample count, seed and perturbation of an orbit run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitOptions {
    pub burn_in: usize,
    pub n: usize,
    pub seed: u64,
    pub noise: Noise,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            burn_in: 1000,
            n: 1_000_000,
            seed: 0,
            noise: Noise::Jitter,
        }
    }
}

/// Closed bounding box. One-dimensional measures ignore the second axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Point2,
    pub hi: Point2,
}

impl Bounds {
    pub fn interval(lo: f64, hi: f64) -> Bounds {
        Bounds {
            lo: [lo, 0.0],
            hi: [hi, 0.0],
        }
    }

    pub fn rect(lo: Point2, hi: Point2) -> Bounds {
        Bounds { lo, hi }
    }

    fn check(&self, dims: usize) -> Result<(), SrbError> {
        for a in 0..dims {
            if !(self.lo[a].is_finite() && self.hi[a].is_finite() && self.hi[a] > self.lo[a]) {
                return Err(SrbError::Invalid(format!(
                    "bounds {:?}..{:?} are empty or not finite",
                    self.lo, self.hi
                )));
            }
        }
        Ok(())
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    /// Smallest box containing both, widened by 1% of its extent per side.
    fn hull_padded(&self, other: &Bounds, dims: usize) -> Bounds {
        let mut b = *self;
        for a in 0..dims {
            let lo = self.lo[a].min(other.lo[a]);
            let hi = self.hi[a].max(other.hi[a]);
            let pad = 0.01 * (hi - lo).max(1e-9);
            b.lo[a] = lo - pad;
            b.hi[a] = hi + pad;
        }
        b
    }

    /// Cell of `p` on a `grid`-per-axis lattice, or `None` outside.
    #[inline]
    fn cell(&self, p: Point2, dims: usize, grid: usize) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for a in 0..dims {
            let v = p[a];
            if !(v >= self.lo[a] && v <= self.hi[a]) {
                return None;
            }
            let k = (((v - self.lo[a]) / self.width(a) * grid as f64) as usize).min(grid - 1);
            idx += k * stride;
            stride *= grid;
        }
        Some(idx)
    }
}

/// Normalized histogram of orbit points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub dims: usize,
    pub bounds: Bounds,
    /// Cells per axis.
    pub grid: usize,
    /// Row-major in 2D: index `iy * grid + ix`.
    pub weights: Vec<f64>,
    pub n_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Whether the bounds were enlarged to fit the orbit.
    pub expanded: bool,
}

/// Everything in an [`EmpiricalMeasure`] except the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureHeader {
    pub dims: usize,
    pub bounds: Bounds,
    pub grid: usize,
    pub seed: u64,
    pub n: usize,
    pub burn_in: usize,
    pub expanded: bool,
}

impl EmpiricalMeasure {
    /// Measure with the given cell weights, normalized to total mass one.
    pub fn from_weights(dims: usize, bounds: Bounds, grid: usize, weights: Vec<f64>) -> Result<Self, SrbError> {
        if !(dims == 1 || dims == 2) || grid == 0 {
            return Err(SrbError::Invalid(format!("dims {dims} / grid {grid}")));
        }
        bounds.check(dims)?;
        if weights.len() != grid.pow(dims as u32) {
            return Err(SrbError::Invalid(format!(
                "{} weights for a {grid}^{dims} grid",
                weights.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(SrbError::Invalid(
                "weights must be nonnegative with positive finite total".into(),
            ));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(EmpiricalMeasure {
            dims,
            bounds,
            grid,
            weights,
            n_samples: 0,
            burn_in: 0,
            seed: 0,
            expanded: false,
        })
    }

    /// Unit mass in the cell containing `p`.
    pub fn dirac(dims: usize, bounds: Bounds, grid: usize, p: Point2) -> Result<Self, SrbError> {
        bounds.check(dims)?;
        let cell = bounds
            .cell(p, dims, grid)
            .ok_or_else(|| SrbError::Invalid(format!("{p:?} outside bounds")))?;
        let mut w = vec![0.0; grid.pow(dims as u32)];
        w[cell] = 1.0;
        Self::from_weights(dims, bounds, grid, w)
    }

    /// Equal weight on every cell of a one-dimensional grid.
    pub fn uniform(lo: f64, hi: f64, grid: usize) -> Result<Self, SrbError> {
        Self::from_weights(1, Bounds::interval(lo, hi), grid, vec![1.0; grid])
    }

    pub fn header(&self) -> MeasureHeader {
        MeasureHeader {
            dims: self.dims,
            bounds: self.bounds,
            grid: self.grid,
            seed: self.seed,
            n: self.n_samples,
            burn_in: self.burn_in,
            expanded: self.expanded,
        }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        self.bounds.width(axis) / self.grid as f64
    }

    /// Center of cell `idx`.
    pub fn center(&self, idx: usize) -> Point2 {
        let (ix, iy) = (idx % self.grid, idx / self.grid);
        let x = self.bounds.lo[0] + (ix as f64 + 0.5) * self.cell_width(0);
        let y = if self.dims == 2 {
            self.bounds.lo[1] + (iy as f64 + 0.5) * self.cell_width(1)
        } else {
            0.0
        };
        [x, y]
    }

    /// Cell centers with weights, in storage order.
    pub fn atoms(&self) -> impl Iterator<Item = (Point2, f64)> + '_ {
        self.weights.iter().enumerate().map(|(i, &w)| (self.center(i), w))
    }

    /// Same weights on bounds shifted by `v`.
    pub fn translated(&self, v: Point2) -> Self {
        let mut m = self.clone();
        for a in 0..self.dims {
            m.bounds.lo[a] += v[a];
            m.bounds.hi[a] += v[a];
        }
        m
    }

    /// Cell-wise L1 distance between weights on identical grids.
    pub fn weight_l1(&self, other: &Self) -> Result<f64, SrbError> {
        if self.dims != other.dims || self.grid != other.grid || self.bounds != other.bounds {
            return Err(SrbError::Invalid("weight_l1 needs identical grids".into()));
        }
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }
}

struct Pass {
    counts: Vec<u64>,
    outside: usize,
    seen: Bounds,
}

fn run_pass(
    sys: &System,
    x0: Point2,
    opts: &OrbitOptions,
    bounds: Option<&Bounds>,
    grid: usize,
) -> Result<Pass, SrbError> {
    let dims = sys.dim();
    let mut orbit = SampledOrbit::new(*sys, x0, opts.seed, opts.noise)?;
    orbit.skip(opts.burn_in)?;
    let cells = if bounds.is_some() { grid.pow(dims as u32) } else { 0 };
    let mut counts = vec![0u64; cells];
    let mut outside = 0;
    let mut seen = Bounds {
        lo: [f64::INFINITY; 2],
        hi: [f64::NEG_INFINITY; 2],
    };
    for _ in 0..opts.n {
        let p = orbit.advance()?;
        for a in 0..dims {
            seen.lo[a] = seen.lo[a].min(p[a]);
            seen.hi[a] = seen.hi[a].max(p[a]);
        }
        if let Some(b) = bounds {
            match b.cell(p, dims, grid) {
                Some(c) => counts[c] += 1,
                None => outside += 1,
            }
        }
    }
    Ok(Pass { counts, outside, seen })
}

/// Histogram of `f^{burn_in+1}(x0), ..., f^{burn_in+n}(x0)`.
///
/// Without explicit bounds, 1D maps use their domain and planar maps a
/// padded bounding box of the orbit. If the orbit leaves the given bounds,
/// they are enlarged once and the run repeated, so the result always holds
/// all `n` points.
pub fn empirical_measure(
    sys: &System,
    x0: Point2,
    opts: &OrbitOptions,
    grid: usize,
    bounds: Option<Bounds>,
) -> Result<EmpiricalMeasure, SrbError> {
    if opts.n == 0 || grid == 0 {
        return Err(SrbError::Invalid("n and grid must be positive".into()));
    }
    let dims = sys.dim();
    let (mut bounds, mut expanded) = match (bounds, sys) {
        (Some(b), _) => (b, false),
        (None, System::Interval(m)) => (Bounds::interval(m.domain().lo, m.domain().hi), false),
        (None, _) => {
            let seen = run_pass(sys, x0, opts, None, grid)?.seen;
            (seen.hull_padded(&seen, dims), false)
        }
    };
    bounds.check(dims)?;
    let mut pass = run_pass(sys, x0, opts, Some(&bounds), grid)?;
    if pass.outside > 0 {
        bounds = bounds.hull_padded(&pass.seen, dims);
        expanded = true;
        pass = run_pass(sys, x0, opts, Some(&bounds), grid)?;
        debug_assert_eq!(pass.outside, 0);
    }
    let n = opts.n as f64;
    Ok(EmpiricalMeasure {
        dims,
        bounds,
        grid,
        weights: pass.counts.iter().map(|&c| c as f64 / n).collect(),
        n_samples: opts.n,
        burn_in: opts.burn_in,
        seed: opts.seed,
        expanded,
    })
}

/// `(1/n) sum phi(f^j x)` over `j = burn_in + 1, ..., burn_in + n`.
pub fn birkhoff_average(sys: &System, phi: &Expr, x0: Point2, opts: &OrbitOptions) -> Result<f64, SrbError> {
    if opts.n == 0 {
        return Err(SrbError::Invalid("n must be positive".into()));
    }
    let mut orbit = SampledOrbit::new(*sys, x0, opts.seed, opts.noise)?;
    orbit.skip(opts.burn_in)?;
    let mut sum = KahanSum::default();
    let mut first = None;
    let mut constant = true;
    for _ in 0..opts.n {
        let p = orbit.advance()?;
        let logjac = if phi.uses_logjac() { sys.log_jacobian(p) } else { 0.0 };
        let v = phi.eval(Point {
            x: p[0],
            y: p[1],
            logjac,
        });
        match first {
            None => first = Some(v),
            Some(f) if f != v => constant = false,
            _ => {}
        }
        sum.add(v);
    }
    match first {
        Some(f) if constant => Ok(f),
        _ => Ok(sum.value() / opts.n as f64),
    }
}
