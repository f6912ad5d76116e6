use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::henon::{HenonMap, Point2};
use crate::rng::rng_from_seed;

/// Closed polygon (vertices in order, last edge implied).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrappingRegion {
    pub polygon: Vec<Point2>,
    pub n_boundary_samples: usize,
}

impl TrappingRegion {
    pub fn new(polygon: Vec<Point2>, n_boundary_samples: usize) -> Self {
        TrappingRegion {
            polygon,
            n_boundary_samples,
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.polygon.len();
        (0..n).map(move |i| (self.polygon[i], self.polygon[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        0.5 * self.edges().map(|(p, q)| p[0] * q[1] - q[0] * p[1]).sum::<f64>().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(p, q)| (q[0] - p[0]).hypot(q[1] - p[1])).sum()
    }

    /// Strict interior test; points on an edge are outside.
    pub fn contains(&self, p: Point2) -> bool {
        if self.polygon.len() < 3 || self.area() == 0.0 {
            return false;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x_cross {
                    inside = !inside;
                }
            }
        }
        inside && self.distance_to_boundary(p) > 0.0
    }

    pub fn distance_to_boundary(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.polygon {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Evenly spaced points along the perimeter.
    pub fn boundary_points(&self) -> Vec<Point2> {
        let n = self.n_boundary_samples;
        let total = self.perimeter();
        if n == 0 || self.polygon.is_empty() {
            return Vec::new();
        }
        if total == 0.0 {
            return vec![self.polygon[0]; n];
        }
        let mut out = Vec::with_capacity(n);
        let edges: Vec<(Point2, Point2, f64)> = self
            .edges()
            .map(|(a, b)| (a, b, (b[0] - a[0]).hypot(b[1] - a[1])))
            .collect();
        let mut e = 0;
        let mut start = 0.0;
        for k in 0..n {
            let s = total * k as f64 / n as f64;
            while e + 1 < edges.len() && start + edges[e].2 <= s {
                start += edges[e].2;
                e += 1;
            }
            let (a, b, len) = edges[e];
            let t = if len > 0.0 {
                ((s - start) / len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
        out
    }
}

pub(crate) fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * d[0], a[1] + t * d[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapCheckReport {
    pub pass: bool,
    /// Every sampled boundary point maps strictly inside.
    pub boundary_pass: bool,
    pub boundary_samples: usize,
    pub boundary_failures: usize,
    pub interior_samples: usize,
    pub interior_failures: usize,
    pub n_steps: usize,
    /// Smallest distance to the boundary over all iterates that stayed inside.
    pub min_distance_to_boundary: f64,
}

/// Samples the boundary and the interior of `region` and follows each point
/// for `n_steps` iterations. Passes iff every point stays strictly inside.
pub fn trapping_region_check(
    map: &HenonMap,
    region: &TrappingRegion,
    n_interior_samples: usize,
    n_steps: usize,
    seed: u64,
) -> TrapCheckReport {
    let mut min_dist = f64::INFINITY;
    let follow = |start: Point2, min_dist: &mut f64| -> bool {
        let mut p = start;
        for _ in 0..n_steps.max(1) {
            p = map.eval(p);
            if !region.contains(p) {
                return false;
            }
            *min_dist = min_dist.min(region.distance_to_boundary(p));
        }
        true
    };

    let boundary = region.boundary_points();
    let boundary_failures = boundary.iter().filter(|&&p| !follow(p, &mut min_dist)).count();

    let (lo, hi) = region.bounding_box();
    let mut rng = rng_from_seed(seed);
    let mut interior = Vec::with_capacity(n_interior_samples);
    let max_draws = 1000 * n_interior_samples.max(1);
    let mut draws = 0;
    if region.area() > 0.0 && lo[0] < hi[0] && lo[1] < hi[1] {
        while interior.len() < n_interior_samples && draws < max_draws {
            draws += 1;
            let p = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
            if region.contains(p) {
                interior.push(p);
            }
        }
    }
    let missing = n_interior_samples - interior.len();
    let interior_failures = missing + interior.iter().filter(|&&p| !follow(p, &mut min_dist)).count();

    let boundary_pass = boundary_failures == 0 && !boundary.is_empty();
    TrapCheckReport {
        pass: boundary_pass && interior_failures == 0,
        boundary_pass,
        boundary_samples: boundary.len(),
        boundary_failures,
        interior_samples: interior.len(),
        interior_failures,
        n_steps,
        min_distance_to_boundary: if min_dist.is_finite() { min_dist } else { 0.0 },
    }
}
