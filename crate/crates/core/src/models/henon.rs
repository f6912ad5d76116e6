use serde::{Deserialize, Serialize};

use super::MapError;

pub type Point2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// The Hénon map `(x, y) -> (1 - a x^2 + y, b x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HenonMap {
    pub a: f64,
    pub b: f64,
}

impl HenonMap {
    pub fn new(a: f64, b: f64) -> Result<HenonMap, MapError> {
        if !(1.0..=2.0).contains(&a) {
            return Err(MapError::InvalidParameter { name: "a", value: a });
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(MapError::InvalidParameter { name: "b", value: b });
        }
        Ok(HenonMap { a, b })
    }

    #[inline]
    pub fn eval(&self, p: Point2) -> Point2 {
        [1.0 - self.a * p[0] * p[0] + p[1], self.b * p[0]]
    }

    #[inline]
    pub fn derivative(&self, p: Point2) -> Mat2 {
        [[-2.0 * self.a * p[0], 1.0], [self.b, 0.0]]
    }

    pub fn fixed_point(&self) -> Result<FixedPointData, MapError> {
        henon_fixed_point(self)
    }
}

/// Fixed point with its eigendata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointData {
    pub z_star: Point2,
    pub unstable_eigenvalue: f64,
    /// Unit vector; oriented with positive second component.
    pub unstable_direction: Point2,
    pub stable_eigenvalue: f64,
    /// The other fixed point, reported because no comparison of the two
    /// candidates' unstable manifolds is made.
    pub alternate_root: Point2,
}

/// Fixed point on the branch `x* > 0`.
pub fn henon_fixed_point(map: &HenonMap) -> Result<FixedPointData, MapError> {
    let (a, b) = (map.a, map.b);
    // x* solves a x^2 + (1 - b) x - 1 = 0
    let disc = (1.0 - b) * (1.0 - b) + 4.0 * a;
    if !(disc > 0.0) {
        return Err(MapError::NoRealFixedPoint { a, b });
    }
    let sq = disc.sqrt();
    // Vieta's product -1/a avoids cancellation in the second root.
    let x_plus = 2.0 / (1.0 - b + sq);
    let x_minus = -1.0 / (a * x_plus);
    let z_star = [x_plus, b * x_plus];
    // eigenvalues of [[-2ax, 1], [b, 0]]: l^2 + 2ax l - b = 0
    let ax = a * x_plus;
    let root = (ax * ax + b).sqrt();
    let (unstable, stable) = if ax >= 0.0 {
        (-ax - root, b / (ax + root))
    } else {
        (-ax + root, -b / (root - ax))
    };
    // second row of (Df - l I) v = 0 gives b v0 = l v1
    let v = [unstable, b];
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    Ok(FixedPointData {
        z_star,
        unstable_eigenvalue: unstable,
        unstable_direction: [v[0] / n, v[1] / n],
        stable_eigenvalue: stable,
        alternate_root: [x_minus, b * x_minus],
    })
}
