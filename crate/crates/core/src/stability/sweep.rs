use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::Distance;
use super::StabilityError;
use crate::expr::Expr;
use crate::interval::Interval;
use crate::models::{HenonMap, Map1D, System};
use crate::srb::{
    birkhoff_average, empirical_measure, lyapunov_spectrum, Bounds, EmpiricalMeasure, LyapunovOptions, OrbitOptions,
};
use crate::tower::{
    entropy, return_time_stats, solve_invariant_density, Branch, GibbsMarkovTower, SolveOptions, DEFAULT_R_MAX,
};

/// One-parameter family swept by [`stability_sweep`]. The named field is the
/// base value of the swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Family {
    /// Hénon map; `a` is swept, `b` fixed.
    Henon {
        a: f64,
        b: f64,
    },
    Tent {
        slope: f64,
    },
    /// Two-branch affine tower with masses `(theta, 1 - theta)` and return
    /// times `(1, 2)`.
    Bernoulli {
        theta: f64,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Henon { .. } => "henon",
            Family::Tent { .. } => "tent",
            Family::Bernoulli { .. } => "bernoulli",
        }
    }

    pub fn param_base(&self) -> f64 {
        match *self {
            Family::Henon { a, .. } => a,
            Family::Tent { slope } => slope,
            Family::Bernoulli { theta } => theta,
        }
    }

    /// The family member with the swept parameter moved by `delta`.
    pub fn shifted(&self, delta: f64) -> Family {
        match *self {
            Family::Henon { a, b } => Family::Henon { a: a + delta, b },
            Family::Tent { slope } => Family::Tent { slope: slope + delta },
            Family::Bernoulli { theta } => Family::Bernoulli { theta: theta + delta },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub family: Family,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub burn_in: usize,
    /// Histogram cells per axis.
    pub grid: usize,
    pub distance: Distance,
}

impl SweepSpec {
    pub fn check(&self) -> Result<(), StabilityError> {
        if !self.deltas.contains(&0.0) {
            return Err(StabilityError::Invalid("deltas must include 0".into()));
        }
        if self.seeds.is_empty() {
            return Err(StabilityError::Invalid("seeds must be nonempty".into()));
        }
        if self.deltas.iter().any(|d| !d.is_finite()) {
            return Err(StabilityError::Invalid("deltas must be finite".into()));
        }
        if self.n == 0 || self.grid == 0 {
            return Err(StabilityError::Invalid("n and grid must be positive".into()));
        }
        if let Distance::SlicedW1 { n_directions } = self.distance {
            if n_directions < 4 {
                return Err(StabilityError::Invalid(format!(
                    "n_directions = {n_directions}, need at least 4"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub family: String,
    pub param_base: f64,
    pub delta: f64,
    pub seed: u64,
    pub n: usize,
    /// Distance to the base-parameter measure with the same seed.
    pub distance: Option<f64>,
    pub entropy: Option<f64>,
    pub lambda1: Option<f64>,
    /// `ok`, or the error that ended the row.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub delta: f64,
    /// Rows with a finite distance.
    pub count: usize,
    pub median: Option<f64>,
    pub iqr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Ordered by delta (as given), then seed (as given).
    pub rows: Vec<StabilityRow>,
    pub summary: Vec<DeltaSummary>,
    /// Wall-clock seconds per row, aligned with `rows`.
    #[serde(skip)]
    pub runtimes: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

pub fn median_iqr(values: &[f64]) -> Option<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some((quantile(&v, 0.5), quantile(&v, 0.75) - quantile(&v, 0.25)))
}

/// Affine tower on `[0, 1)` with branches `[0, theta)` and `[theta, 1)` and
/// return times 1 and 2.
pub fn bernoulli_tower(theta: f64) -> Result<GibbsMarkovTower, StabilityError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(StabilityError::Invalid(format!("theta = {theta} outside (0, 1)")));
    }
    let unit = Interval::new(0.0, 1.0);
    let branches = vec![
        Branch::affine_onto(Interval::new(0.0, theta), unit, 1),
        Branch::affine_onto(Interval::new(theta, 1.0), unit, 2),
    ];
    let placeholder = crate::tower::DistortionBudget::new(0.0, 0.5, 0.0, 1.0, 0.0)?;
    let t = GibbsMarkovTower::new(unit, branches, DEFAULT_R_MAX, 0.0, placeholder)?;
    let budget = t.fit_budget(0.5, 8)?;
    Ok(t.with_budget(budget)?)
}

/// Closed-form entropy of [`bernoulli_tower`].
pub fn bernoulli_entropy(theta: f64) -> f64 {
    (-theta * theta.ln() - (1.0 - theta) * (1.0 - theta).ln()) / (2.0 - theta)
}

/// Tower entropy with the invariant density solved on `grid` cells.
fn tower_entropy(tower: &GibbsMarkovTower, grid: usize) -> Result<f64, StabilityError> {
    let d = solve_invariant_density(
        tower,
        &SolveOptions {
            grid,
            ..SolveOptions::default()
        },
    )?;
    Ok(entropy(tower, &d)?)
}

/// Saturated measure of the Bernoulli tower on `[0, 2]`, level `l` occupying
/// `[l, l + 1)`.
fn bernoulli_measure(theta: f64, grid: usize) -> Result<EmpiricalMeasure, StabilityError> {
    let tower = bernoulli_tower(theta)?;
    let d = solve_invariant_density(
        &tower,
        &SolveOptions {
            grid,
            ..SolveOptions::default()
        },
    )?;
    let sigma = return_time_stats(&tower, &d).sigma;
    let h = 2.0 / grid as f64;
    let weights = (0..grid)
        .map(|j| {
            let cell = Interval::new(j as f64 * h, (j + 1) as f64 * h);
            let mut w = 0.0;
            for b in tower.branches() {
                for l in 0..b.return_time {
                    let level = Interval::new(b.domain.lo + f64::from(l), b.domain.hi + f64::from(l));
                    // density is uniform for affine full branches
                    w += cell.overlap_len(&level);
                }
            }
            w / sigma
        })
        .collect();
    Ok(EmpiricalMeasure::from_weights(
        1,
        Bounds::interval(0.0, 2.0),
        grid,
        weights,
    )?)
}

struct Sample {
    measure: EmpiricalMeasure,
    entropy: Option<f64>,
    lambda1: Option<f64>,
}

fn sample(family: &Family, spec: &SweepSpec, seed: u64) -> Result<Sample, StabilityError> {
    let orbit = OrbitOptions {
        burn_in: spec.burn_in,
        n: spec.n,
        seed,
        ..OrbitOptions::default()
    };
    match *family {
        Family::Henon { a, b } => {
            let sys = System::Henon(HenonMap::new(a, b)?);
            let x0 = sys.seeded_start(seed);
            let measure = empirical_measure(&sys, x0, &orbit, spec.grid, None)?;
            let lopts = LyapunovOptions {
                n: spec.n.max(crate::srb::MIN_STEPS),
                burn_in: spec.burn_in,
                seed,
                ..LyapunovOptions::default()
            };
            let lambda1 = lyapunov_spectrum(&sys, x0, &lopts)?.lambda1;
            Ok(Sample {
                measure,
                entropy: None,
                lambda1: Some(lambda1),
            })
        }
        Family::Tent { slope } => {
            let sys = System::Interval(Map1D::tent(slope)?);
            let x0 = sys.seeded_start(seed);
            let measure = empirical_measure(&sys, x0, &orbit, spec.grid, None)?;
            let h = birkhoff_average(&sys, &log_derivative(), x0, &orbit)?;
            Ok(Sample {
                measure,
                entropy: Some(h),
                lambda1: Some(h),
            })
        }
        Family::Bernoulli { theta } => {
            let measure = bernoulli_measure(theta, spec.grid)?;
            let h = tower_entropy(&bernoulli_tower(theta)?, spec.grid)?;
            Ok(Sample {
                measure,
                entropy: Some(h),
                lambda1: None,
            })
        }
    }
}

fn log_derivative() -> Expr {
    Expr::parse("logjac").expect("builtin observable")
}

/// Distances from the base-parameter measure to each shifted measure, one
/// row per `(delta, seed)`. Failed rows are kept with their error as status.
pub fn stability_sweep(spec: &SweepSpec) -> Result<StabilityReport, StabilityError> {
    spec.check()?;
    let bases: Vec<Result<Sample, StabilityError>> = spec
        .seeds
        .par_iter()
        .map(|&seed| sample(&spec.family, spec, seed))
        .collect();
    let jobs: Vec<(f64, usize)> = spec
        .deltas
        .iter()
        .flat_map(|&d| (0..spec.seeds.len()).map(move |s| (d, s)))
        .collect();
    let done: Vec<(StabilityRow, f64)> = jobs
        .par_iter()
        .map(|&(delta, si)| {
            let start = Instant::now();
            let seed = spec.seeds[si];
            let mut row = StabilityRow {
                family: spec.family.name().to_string(),
                param_base: spec.family.param_base(),
                delta,
                seed,
                n: spec.n,
                distance: None,
                entropy: None,
                lambda1: None,
                status: "ok".into(),
            };
            let result = (|| -> Result<(), StabilityError> {
                let base = bases[si].as_ref().map_err(Clone::clone)?;
                let s = if delta == 0.0 {
                    None
                } else {
                    Some(sample(&spec.family.shifted(delta), spec, seed)?)
                };
                let s = s.as_ref().unwrap_or(base);
                row.entropy = s.entropy;
                row.lambda1 = s.lambda1;
                let d = spec.distance.eval(&base.measure, &s.measure)?;
                if !d.is_finite() {
                    return Err(StabilityError::Invalid(format!("distance {d}")));
                }
                row.distance = Some(d);
                Ok(())
            })();
            if let Err(e) = result {
                row.status = format!("error: {e}");
            }
            (row, start.elapsed().as_secs_f64())
        })
        .collect();
    let (rows, runtimes): (Vec<_>, Vec<_>) = done.into_iter().unzip();
    let summary = spec
        .deltas
        .iter()
        .map(|&delta| {
            let ds: Vec<f64> = rows
                .iter()
                .filter(|r| r.delta == delta)
                .filter_map(|r| r.distance)
                .collect();
            let mi = median_iqr(&ds);
            DeltaSummary {
                delta,
                count: ds.len(),
                median: mi.map(|m| m.0),
                iqr: mi.map(|m| m.1),
            }
        })
        .collect();
    Ok(StabilityReport {
        rows,
        summary,
        runtimes,
    })
}

/// Families for [`entropy_continuity_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub enum EntropyFamily {
    /// The same tower for every parameter.
    Constant(Box<GibbsMarkovTower>),
    /// [`bernoulli_tower`]`(theta)`.
    Bernoulli,
    /// Tent map of slope `theta`, entropy as the Birkhoff average of `log |T'|`.
    Tent { orbit: OrbitOptions },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub theta: f64,
    pub entropy: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub rows: Vec<EntropyRow>,
    /// `(delta, max |h(theta) - h(theta')|)` over sampled pairs with
    /// `|theta - theta'| <= delta`, for every distinct pair spacing.
    pub modulus: Vec<(f64, f64)>,
}

/// `h(theta)` for each parameter, with the sampled modulus of continuity.
pub fn entropy_continuity_sweep(
    family: &EntropyFamily,
    thetas: &[f64],
    grid: usize,
) -> Result<EntropyReport, StabilityError> {
    if thetas.is_empty() || grid == 0 {
        return Err(StabilityError::Invalid(
            "need at least one parameter and a positive grid".into(),
        ));
    }
    let rows: Vec<EntropyRow> = thetas
        .par_iter()
        .map(|&theta| {
            let h = match family {
                EntropyFamily::Constant(t) => tower_entropy(t, grid),
                EntropyFamily::Bernoulli => bernoulli_tower(theta).and_then(|t| tower_entropy(&t, grid)),
                EntropyFamily::Tent { orbit } => (|| {
                    let sys = System::Interval(Map1D::tent(theta)?);
                    Ok(birkhoff_average(
                        &sys,
                        &log_derivative(),
                        sys.seeded_start(orbit.seed),
                        orbit,
                    )?)
                })(),
            };
            match h {
                Ok(h) => EntropyRow {
                    theta,
                    entropy: Some(h),
                    status: "ok".into(),
                },
                Err(e) => EntropyRow {
                    theta,
                    entropy: None,
                    status: format!("error: {e}"),
                },
            }
        })
        .collect();
    Ok(EntropyReport {
        modulus: modulus_table(&rows),
        rows,
    })
}

fn modulus_table(rows: &[EntropyRow]) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.entropy.map(|h| (r.theta, h))).collect();
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            pairs.push(((pts[i].0 - pts[j].0).abs(), (pts[i].1 - pts[j].1).abs()));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // spacings closer than this are treated as one
    const MERGE: f64 = 1e-9;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let (mut running, mut group_start) = (0.0f64, f64::NAN);
    for (gap, diff) in pairs {
        running = running.max(diff);
        match out.last_mut() {
            Some(last) if gap - group_start <= MERGE => *last = (gap, running),
            _ => {
                group_start = gap;
                out.push((gap, running));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: Family, deltas: Vec<f64>) -> SweepSpec {
        SweepSpec {
            family,
            deltas,
            seeds: vec![1, 2],
            n: 20_000,
            burn_in: 100,
            grid: 64,
            distance: Distance::SlicedW1 { n_directions: 8 },
        }
    }

    #[test]
    fn zero_delta_rows_are_exactly_zero() {
        let r = stability_sweep(&spec(Family::Henon { a: 1.4, b: 0.3 }, vec![0.0, -0.01])).unwrap();
        assert_eq!(r.rows.len(), 4);
        for row in &r.rows {
            assert_eq!(row.status, "ok");
            if row.delta == 0.0 {
                assert_eq!(row.distance, Some(0.0));
            } else {
                assert!(row.distance.unwrap() > 0.0);
            }
        }
        assert_eq!(r.runtimes.len(), 4);
    }

    #[test]
    fn spec_without_zero_delta_is_rejected() {
        assert!(stability_sweep(&spec(Family::Tent { slope: 2.0 }, vec![0.1])).is_err());
        let mut s = spec(Family::Tent { slope: 2.0 }, vec![0.0]);
        s.seeds.clear();
        assert!(stability_sweep(&s).is_err());
    }

    #[test]
    fn failed_rows_keep_the_sweep_going() {
        // slope 2.5 leaves the tent family
        let r = stability_sweep(&spec(Family::Tent { slope: 1.9 }, vec![0.0, 0.6])).unwrap();
        assert!(r
            .rows
            .iter()
            .filter(|x| x.delta == 0.6)
            .all(|x| x.status.starts_with("error")));
        assert!(r.rows.iter().filter(|x| x.delta == 0.0).all(|x| x.status == "ok"));
        assert_eq!(r.summary[1].count, 0);
        assert_eq!(r.summary[1].median, None);
    }

    #[test]
    fn bernoulli_sweep_matches_closed_form() {
        let r = stability_sweep(&spec(Family::Bernoulli { theta: 0.5 }, vec![0.0, -0.01, -0.05])).unwrap();
        for row in &r.rows {
            let theta = 0.5 + row.delta;
            assert!((row.entropy.unwrap() - bernoulli_entropy(theta)).abs() < 1e-8);
            assert!((row.entropy.unwrap() - bernoulli_entropy(0.5)).abs() <= 2.0 * row.delta.abs() + 1e-8);
        }
    }

    #[test]
    fn bernoulli_measure_has_level_structure() {
        let m = bernoulli_measure(0.5, 4).unwrap();
        // levels: [0,1) carries 1/sigma, [1.5, 2) carries 0.5/sigma
        let s = 1.5;
        let expect = [0.5 / s, 0.5 / s, 0.0, 0.5 / s];
        for (w, e) in m.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_family_has_zero_modulus() {
        let t = bernoulli_tower(0.3).unwrap();
        let r = entropy_continuity_sweep(&EntropyFamily::Constant(Box::new(t)), &[0.1, 0.2, 0.4], 64).unwrap();
        let h0 = r.rows[0].entropy.unwrap();
        assert!(r.rows.iter().all(|x| x.entropy == Some(h0)));
        assert!(r.modulus.iter().all(|m| m.1 == 0.0));
    }

    #[test]
    fn tent_family_is_log_slope() {
        let orbit = OrbitOptions {
            n: 10_000,
            ..OrbitOptions::default()
        };
        let thetas: Vec<f64> = (0..=10).map(|k| 1.9 + 0.01 * k as f64).collect();
        let r = entropy_continuity_sweep(&EntropyFamily::Tent { orbit }, &thetas, 64).unwrap();
        for row in &r.rows {
            assert!((row.entropy.unwrap() - row.theta.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn modulus_is_monotone() {
        let thetas: Vec<f64> = (1..=19).map(|k| 0.05 * k as f64).collect();
        let r = entropy_continuity_sweep(&EntropyFamily::Bernoulli, &thetas, 64).unwrap();
        assert_eq!(r.modulus.len(), 18);
        assert!(r.modulus.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn median_and_iqr() {
        assert_eq!(median_iqr(&[3.0, 1.0, 2.0, 4.0]), Some((2.5, 1.5)));
        assert_eq!(median_iqr(&[f64::NAN]), None);
    }
}
