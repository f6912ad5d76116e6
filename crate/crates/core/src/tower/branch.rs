use crate::expr::Expr;
use crate::interval::Interval;
use crate::models::Map1D;

/// How a branch acts on its domain.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchMap {
    /// `x -> slope * x + intercept`.
    Affine { slope: f64, intercept: f64 },
    /// `x -> 4x(1 - x)` restricted to the domain (which lies in one lap).
    Logistic,
    /// `f^tau` for an interval map `f`, following the recorded lap itinerary.
    Composed { map: Map1D, itinerary: Vec<u8> },
}

/// Jacobian of the branch with respect to the reference measure.
#[derive(Debug, Clone, PartialEq)]
pub enum Jacobian {
    /// `|F'(x)|`; the normalization of the reference measure cancels because
    /// every branch maps onto the whole base.
    Derived,
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub domain: Interval,
    pub return_time: u32,
    pub map: BranchMap,
    pub jacobian: Jacobian,
}

impl Branch {
    pub fn new(domain: Interval, return_time: u32, map: BranchMap, jacobian: Jacobian) -> Branch {
        Branch {
            domain,
            return_time,
            map,
            jacobian,
        }
    }

    /// Increasing affine branch from `domain` onto `target`.
    pub fn affine_onto(domain: Interval, target: Interval, return_time: u32) -> Branch {
        let slope = target.len() / domain.len();
        let intercept = target.lo - slope * domain.lo;
        Branch::new(
            domain,
            return_time,
            BranchMap::Affine { slope, intercept },
            Jacobian::Derived,
        )
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.map {
            BranchMap::Affine { slope, intercept } => slope * x + intercept,
            BranchMap::Logistic => 4.0 * x * (1.0 - x),
            BranchMap::Composed { map, itinerary } => itinerary.iter().fold(x, |y, &lap| map.lap_eval(lap, y)),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.map {
            BranchMap::Affine { slope, .. } => *slope,
            BranchMap::Logistic => 4.0 - 8.0 * x,
            BranchMap::Composed { map, itinerary } => {
                let mut y = x;
                let mut d = 1.0;
                for &lap in itinerary {
                    d *= map.lap_derivative(lap, y);
                    y = map.lap_eval(lap, y);
                }
                d
            }
        }
    }

    /// Preimage of `y` in the closed domain.
    pub fn inverse(&self, y: f64) -> f64 {
        let x = match &self.map {
            BranchMap::Affine { slope, intercept } => (y - intercept) / slope,
            BranchMap::Logistic => Map1D::Logistic.lap_inverse(u8::from(self.domain.mid() >= 0.5), y),
            BranchMap::Composed { map, itinerary } => itinerary.iter().rev().fold(y, |z, &lap| map.lap_inverse(lap, z)),
        };
        x.clamp(self.domain.lo, self.domain.hi)
    }

    /// Running bound on the floating-point error of [`Branch::eval`] at `x`,
    /// propagating each step's rounding through the later derivatives.
    pub fn rounding_bound(&self, x: f64) -> f64 {
        let eps = f64::EPSILON;
        match &self.map {
            BranchMap::Affine { slope, intercept } => 2.0 * eps * ((slope * x).abs() + intercept.abs()),
            BranchMap::Logistic => 4.0 * eps * (4.0 * x * (1.0 - x)).abs().max(x.abs()),
            BranchMap::Composed { map, itinerary } => {
                let mut y = x;
                let mut err = eps * x.abs();
                for &lap in itinerary {
                    err = map.lap_derivative(lap, y).abs() * err + 4.0 * eps * y.abs().max(1.0);
                    y = map.lap_eval(lap, y);
                }
                err
            }
        }
    }

    /// Whether the branch map increases on its domain.
    pub fn increasing(&self) -> bool {
        self.eval(self.domain.hi) >= self.eval(self.domain.lo)
    }

    #[inline]
    pub fn jacobian(&self, x: f64) -> f64 {
        match &self.jacobian {
            Jacobian::Derived => self.derivative(x).abs(),
            Jacobian::Expr(e) => e.eval_x(x),
        }
    }

    /// `f^l(x)` for `l <= return_time`, following the branch itinerary.
    pub fn partial(&self, l: usize, x: f64) -> Option<f64> {
        match &self.map {
            BranchMap::Composed { map, itinerary } if l <= itinerary.len() => {
                Some(itinerary[..l].iter().fold(x, |y, &lap| map.lap_eval(lap, y)))
            }
            _ if l == 0 => Some(x),
            _ if l == self.return_time as usize => Some(self.eval(x)),
            _ => None,
        }
    }

    /// Inverse of `f^l` on the image of the domain under [`Branch::partial`].
    pub fn partial_inverse(&self, l: usize, y: f64) -> Option<f64> {
        match &self.map {
            BranchMap::Composed { map, itinerary } if l <= itinerary.len() => {
                Some(itinerary[..l].iter().rev().fold(y, |z, &lap| map.lap_inverse(lap, z)))
            }
            _ if l == 0 => Some(y),
            _ if l == self.return_time as usize => Some(self.inverse(y)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composed_branch_matches_iteration() {
        let b = Branch::new(
            Interval::new(0.25, 0.375),
            2,
            BranchMap::Composed {
                map: Map1D::Doubling,
                itinerary: vec![0, 1],
            },
            Jacobian::Derived,
        );
        assert!((b.eval(0.3) - 0.2).abs() < 1e-15);
        assert_eq!(b.derivative(0.3), 4.0);
        assert!((b.inverse(b.eval(0.3)) - 0.3).abs() < 1e-15);
        assert_eq!(b.partial(1, 0.3), Some(0.6));
        assert!(b.increasing());
    }

    #[test]
    fn logistic_branch_inverse_uses_the_right_lap() {
        let left = Branch::new(Interval::new(0.0, 0.5), 1, BranchMap::Logistic, Jacobian::Derived);
        let right = Branch::new(Interval::new(0.5, 1.0), 1, BranchMap::Logistic, Jacobian::Derived);
        assert!((left.inverse(0.75) - 0.25).abs() < 1e-15);
        assert!((right.inverse(0.75) - 0.75).abs() < 1e-15);
        assert!(!right.increasing());
        assert_eq!(left.jacobian(0.25), 2.0);
    }

    #[test]
    fn explicit_jacobian_is_evaluated() {
        let b = Branch::new(
            Interval::new(0.0, 0.5),
            1,
            BranchMap::Affine {
                slope: 2.0,
                intercept: 0.0,
            },
            Jacobian::Expr(Expr::parse("1 + x").unwrap()),
        );
        assert_eq!(b.jacobian(0.25), 1.25);
    }
}
