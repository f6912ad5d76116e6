use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::StabilityError;
use crate::srb::EmpiricalMeasure;

/// Weak-star proxy used by sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Distance {
    W1,
    SlicedW1 { n_directions: usize },
}

impl Distance {
    pub fn eval(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64, StabilityError> {
        match *self {
            Distance::W1 if mu.dims == 1 => w1_distance_1d(mu, nu),
            Distance::W1 => sliced_w1(mu, nu, 4),
            Distance::SlicedW1 { n_directions } if mu.dims == 2 => sliced_w1(mu, nu, n_directions),
            Distance::SlicedW1 { .. } => w1_distance_1d(mu, nu),
        }
    }
}

/// `int |F - G|` for atoms `(position, weight)`; sorts both lists.
///
/// Each distribution function is accumulated in its own order, so equal
/// inputs give exactly zero.
fn w1_atoms(a: &mut [(f64, f64)], b: &mut [(f64, f64)]) -> f64 {
    a.sort_by(|p, q| p.0.total_cmp(&q.0));
    b.sort_by(|p, q| p.0.total_cmp(&q.0));
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        if let Some(px) = prev {
            total += (fa - fb).abs() * (x - px);
        }
        while i < a.len() && a[i].0 == x {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == x {
            fb += b[j].1;
            j += 1;
        }
        prev = Some(x);
    }
    total
}

fn atoms_1d(m: &EmpiricalMeasure) -> Vec<(f64, f64)> {
    m.atoms().filter(|(_, w)| *w > 0.0).map(|(p, w)| (p[0], w)).collect()
}

/// Wasserstein-1 distance between one-dimensional histograms, with each
/// cell's mass placed at its center. Grids and bounds may differ.
pub fn w1_distance_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64, StabilityError> {
    if mu.dims != 1 || nu.dims != 1 {
        return Err(StabilityError::Invalid(
            "w1_distance_1d needs one-dimensional measures".into(),
        ));
    }
    let (a, b) = (&mu.bounds, &nu.bounds);
    if a.hi[0] < b.lo[0] || b.hi[0] < a.lo[0] {
        return Err(StabilityError::IncompatibleSupports {
            first: [a.lo[0], a.hi[0]],
            second: [b.lo[0], b.hi[0]],
        });
    }
    Ok(w1_atoms(&mut atoms_1d(mu), &mut atoms_1d(nu)))
}

/// Mean of [`w1_distance_1d`] over projections onto the directions
/// `k pi / n_directions`.
pub fn sliced_w1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, n_directions: usize) -> Result<f64, StabilityError> {
    if mu.dims != 2 || nu.dims != 2 {
        return Err(StabilityError::Invalid(
            "sliced_w1 needs two-dimensional measures".into(),
        ));
    }
    if n_directions < 4 {
        return Err(StabilityError::Invalid(format!(
            "n_directions = {n_directions}, need at least 4"
        )));
    }
    let support = |m: &EmpiricalMeasure| m.atoms().filter(|(_, w)| *w > 0.0).collect::<Vec<_>>();
    let (sa, sb) = (support(mu), support(nu));
    let mut total = 0.0;
    for k in 0..n_directions {
        let theta = k as f64 * PI / n_directions as f64;
        let (c, s) = (theta.cos(), theta.sin());
        let project = |pts: &[([f64; 2], f64)]| pts.iter().map(|(p, w)| (c * p[0] + s * p[1], *w)).collect::<Vec<_>>();
        total += w1_atoms(&mut project(&sa), &mut project(&sb));
    }
    Ok(total / n_directions as f64)
}
