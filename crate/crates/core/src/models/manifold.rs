use serde::{Deserialize, Serialize};

use super::henon::{henon_fixed_point, FixedPointData, HenonMap, Point2};
use super::trapping::segment_distance;
use super::MapError;

/// Length of the linear seed segment along the unstable eigenvector.
const SEED_LEN: f64 = 1e-7;
const MAX_BISECTIONS: usize = 60;

/// One branch of the unstable manifold of the fixed point, as a polyline
/// starting at `z*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableManifold {
    pub fixed_point: FixedPointData,
    /// `+1` follows the unstable direction, `-1` the opposite branch.
    pub side: f64,
    pub points: Vec<Point2>,
    pub arc_length: f64,
    /// Angle (radians) between the first segment and the eigenvector.
    pub tangent_angle_error: f64,
    /// Largest spacing allowed between consecutive vertices.
    pub max_gap: f64,
}

fn dist(p: Point2, q: Point2) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Traces the `+` branch of the unstable manifold up to `arc_length`, with
/// vertex spacing at most `arc_length / (n_points - 1)`.
pub fn unstable_manifold_segment(
    map: &HenonMap,
    arc_length: f64,
    n_points: usize,
) -> Result<UnstableManifold, MapError> {
    trace_branch(map, 1.0, arc_length, n_points)
}

/// Traces the branch on `side` (`+1` or `-1`).
///
/// Points are `g^k(z* + side * t * v)` for `t` in one fundamental domain
/// `[d, l^2 d]` of the seed line, where `g = f o f` has the positive unstable
/// eigenvalue `l^2`. Segments longer than the gap are bisected in `t`.
pub fn trace_branch(map: &HenonMap, side: f64, arc_length: f64, n_points: usize) -> Result<UnstableManifold, MapError> {
    let fp = henon_fixed_point(map)?;
    let z = fp.z_star;
    let v = fp.unstable_direction;
    let lam2 = fp.unstable_eigenvalue * fp.unstable_eigenvalue;
    let max_gap = arc_length / (n_points.max(2) - 1) as f64;

    let eval = |t: f64, k: usize| -> Result<Point2, MapError> {
        let mut p = [z[0] + side * t * v[0], z[1] + side * t * v[1]];
        for step in 0..2 * k {
            p = map.eval(p);
            if !(p[0].hypot(p[1]) <= super::system::DIVERGENCE_RADIUS) {
                return Err(MapError::OrbitDiverged {
                    step: step + 1,
                    norm: p[0].hypot(p[1]),
                });
            }
        }
        Ok(p)
    };

    let first = eval(SEED_LEN, 0)?;
    let mut points = vec![z, first];
    let mut length = dist(z, first);
    let (t0, t1) = (SEED_LEN, SEED_LEN * lam2);
    let mut k = 0;
    'outer: while length < arc_length {
        let mut cur = (t0, eval(t0, k)?);
        let mut stack = vec![(t1, eval(t1, k)?)];
        let mut depth = vec![0usize];
        while let Some(&(tb, qb)) = stack.last() {
            let d = *depth.last().unwrap_or(&0);
            if dist(cur.1, qb) > max_gap && d < MAX_BISECTIONS {
                let tm = 0.5 * (cur.0 + tb);
                stack.push((tm, eval(tm, k)?));
                depth.push(d + 1);
                continue;
            }
            stack.pop();
            depth.pop();
            let step = dist(cur.1, qb);
            if length + step >= arc_length {
                let s = if step > 0.0 { (arc_length - length) / step } else { 0.0 };
                points.push([cur.1[0] + s * (qb[0] - cur.1[0]), cur.1[1] + s * (qb[1] - cur.1[1])]);
                length = arc_length;
                break 'outer;
            }
            length += step;
            points.push(qb);
            cur = (tb, qb);
        }
        k += 1;
    }

    let seg = [points[1][0] - z[0], points[1][1] - z[1]];
    let dir = [side * v[0], side * v[1]];
    let cross = seg[0] * dir[1] - seg[1] * dir[0];
    let dot = seg[0] * dir[0] + seg[1] * dir[1];
    Ok(UnstableManifold {
        fixed_point: fp,
        side,
        points,
        arc_length: length,
        tangent_angle_error: cross.abs().atan2(dot),
        max_gap,
    })
}

/// Largest distance from a vertex of `points` to the polyline `line`.
pub fn polyline_excess(points: &[Point2], line: &[Point2]) -> f64 {
    points
        .iter()
        .map(|&p| {
            line.windows(2)
                .map(|w| segment_distance(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Invariance check: maps the `+` branch of length `arc_length` forward once
/// and measures how far its vertices fall from an independently traced
/// branch long enough to contain the image. The result is a one-sided
/// Hausdorff distance.
pub fn manifold_containment_defect(map: &HenonMap, arc_length: f64, n_points: usize) -> Result<f64, MapError> {
    let short = trace_branch(map, 1.0, arc_length, n_points)?;
    let image: Vec<Point2> = short.points.iter().map(|&p| map.eval(p)).collect();
    let image_len: f64 = image.windows(2).map(|w| dist(w[0], w[1])).sum();
    let target_side = if short.fixed_point.unstable_eigenvalue < 0.0 {
        -1.0
    } else {
        1.0
    };
    let long_len = 1.25 * image_len + 1e-6;
    let n_long = ((long_len / short.max_gap).ceil() as usize + 1).max(n_points);
    let long = trace_branch(map, target_side, long_len, n_long)?;
    Ok(polyline_excess(&image, &long.points))
}
