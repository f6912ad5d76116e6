use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::henon::{HenonMap, Mat2, Point2};
use super::map1d::Map1D;
use super::MapError;
use crate::rng::{rng_from_seed, Rng};

/// Orbits whose norm exceeds this are reported as diverged.
pub const DIVERGENCE_RADIUS: f64 = 1e6;

/// Relative amplitude of the per-step perturbation used by sampled orbits.
pub const ORBIT_JITTER: f64 = 1.0 / (1u64 << 50) as f64;

/// Constant linear map of the plane, used as a tangent-dynamics reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearMap2 {
    pub matrix: Mat2,
}

/// Any system the estimators can drive. Points are planar; interval maps
/// use the first coordinate and keep the second at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum System {
    Interval(Map1D),
    Henon(HenonMap),
    Linear(LinearMap2),
}

impl From<Map1D> for System {
    fn from(m: Map1D) -> Self {
        System::Interval(m)
    }
}

impl From<HenonMap> for System {
    fn from(m: HenonMap) -> Self {
        System::Henon(m)
    }
}

impl System {
    pub fn dim(&self) -> usize {
        match self {
            System::Interval(_) => 1,
            _ => 2,
        }
    }

    #[inline]
    pub fn step(&self, p: Point2) -> Point2 {
        match self {
            System::Interval(m) => [m.eval(p[0]), 0.0],
            System::Henon(h) => h.eval(p),
            System::Linear(l) => mat_vec(&l.matrix, p),
        }
    }

    /// Full derivative; interval maps return `[[f'(x), 0], [0, 0]]`.
    #[inline]
    pub fn tangent(&self, p: Point2) -> Mat2 {
        match self {
            System::Interval(m) => [[m.lap_derivative(m.lap_of(p[0]), p[0]), 0.0], [0.0, 0.0]],
            System::Henon(h) => h.derivative(p),
            System::Linear(l) => l.matrix,
        }
    }

    /// `log |f'(x)|` in 1D, `log |det Df|` in 2D.
    #[inline]
    pub fn log_jacobian(&self, p: Point2) -> f64 {
        match self {
            System::Interval(m) => m.lap_derivative(m.lap_of(p[0]), p[0]).abs().ln(),
            System::Henon(h) => h.b.ln(),
            System::Linear(l) => det(&l.matrix).abs().ln(),
        }
    }

    pub fn check_start(&self, p: Point2) -> Result<(), MapError> {
        match self {
            System::Interval(m) if !m.in_domain(p[0]) => Err(MapError::OutsideDomain { x: p[0] }),
            _ if !(p[0].is_finite() && p[1].is_finite()) => Err(MapError::OutsideDomain { x: p[0] }),
            _ => Ok(()),
        }
    }

    /// A seeded starting point: uniform on the interval for 1D maps, a small
    /// box around the origin for Hénon, the origin for linear maps.
    pub fn seeded_start(&self, seed: u64) -> Point2 {
        let mut rng = rng_from_seed(seed ^ 0x5EED_57A7);
        match self {
            System::Interval(m) => {
                let d = m.domain();
                [d.from_unit(rng.random_range(0.01..0.99)), 0.0]
            }
            System::Henon(_) => [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)],
            System::Linear(_) => [0.0, 0.0],
        }
    }
}

#[inline]
pub fn mat_vec(m: &Mat2, v: Point2) -> Point2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

#[inline]
fn norm(p: Point2) -> f64 {
    p[0].hypot(p[1])
}

fn diverged(p: Point2) -> bool {
    !(norm(p) <= DIVERGENCE_RADIUS)
}

/// `f^n(x0)` in plain double precision.
pub fn iterate(sys: &System, x0: Point2, n: usize) -> Result<Point2, MapError> {
    sys.check_start(x0)?;
    let mut p = x0;
    for step in 0..n {
        p = sys.step(p);
        if diverged(p) {
            return Err(MapError::OrbitDiverged {
                step: step + 1,
                norm: norm(p),
            });
        }
    }
    Ok(p)
}

/// `[x0, f(x0), ..., f^n(x0)]`.
pub fn orbit(sys: &System, x0: Point2, n: usize) -> Result<Vec<Point2>, MapError> {
    sys.check_start(x0)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(x0);
    let mut p = x0;
    for step in 0..n {
        p = sys.step(p);
        if diverged(p) {
            return Err(MapError::OrbitDiverged {
                step: step + 1,
                norm: norm(p),
            });
        }
        out.push(p);
    }
    Ok(out)
}

/// Perturbation applied by [`SampledOrbit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    None,
    /// Uniform perturbation of relative size [`ORBIT_JITTER`] after each step.
    /// Keeps orbits of maps like `2x mod 1` from collapsing onto dyadic
    /// rationals in binary floating point.
    #[default]
    Jitter,
}

/// Seeded orbit generator used by the estimators.
pub struct SampledOrbit {
    sys: System,
    point: Point2,
    rng: Rng,
    noise: Noise,
    steps: usize,
}

impl SampledOrbit {
    pub fn new(sys: System, x0: Point2, seed: u64, noise: Noise) -> Result<SampledOrbit, MapError> {
        sys.check_start(x0)?;
        let noise = if matches!(sys, System::Linear(_)) {
            Noise::None
        } else {
            noise
        };
        Ok(SampledOrbit {
            sys,
            point: x0,
            rng: rng_from_seed(seed),
            noise,
            steps: 0,
        })
    }

    pub fn point(&self) -> Point2 {
        self.point
    }

    /// Advances one step and returns the new point.
    #[inline]
    pub fn advance(&mut self) -> Result<Point2, MapError> {
        let mut p = self.sys.step(self.point);
        self.steps += 1;
        if self.noise == Noise::Jitter {
            match &self.sys {
                System::Interval(m) => {
                    let d = m.domain();
                    let q = p[0] + ORBIT_JITTER * d.len() * self.rng.random_range(-1.0..1.0);
                    if m.in_domain(q) {
                        p[0] = q;
                    }
                }
                _ => {
                    p[0] += ORBIT_JITTER * self.rng.random_range(-1.0..1.0);
                    p[1] += ORBIT_JITTER * self.rng.random_range(-1.0..1.0);
                }
            }
        }
        if diverged(p) {
            return Err(MapError::OrbitDiverged {
                step: self.steps,
                norm: norm(p),
            });
        }
        self.point = p;
        Ok(p)
    }

    pub fn skip(&mut self, n: usize) -> Result<(), MapError> {
        for _ in 0..n {
            self.advance()?;
        }
        Ok(())
    }
}
